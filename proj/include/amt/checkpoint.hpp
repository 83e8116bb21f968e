#pragma once

// Flat container of named float32 arrays.
//
// Layout (all integers little-endian):
//   magic "AMTCKPT\0" (8 bytes), version byte (1)
//   u32 header length, header bytes (UTF-8 key=value lines)
//   u32 array count, then per array:
//     u32 name length, name bytes, u32 rank, u64 dims[rank],
//     float32 values[prod(dims)]

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace amt {

struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> values;
};

struct Container {
    std::string header;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

inline constexpr std::uint8_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

}  // namespace amt
