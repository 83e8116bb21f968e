#include "amt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "amt/errors.hpp"

namespace amt {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'M', 'T', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
        need(sizeof(T));
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    std::uint8_t byte() {
        need(1);
        return bytes_[pos_++];
    }

    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }
    void fail(const std::string& what) const { throw ParseError(origin_, 0, what + " at byte " + std::to_string(pos_)); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated container");
    }

    const std::vector<std::uint8_t>& bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Container::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kContainerVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.header.size()));
    out.insert(out.end(), c.header.begin(), c.header.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& a : c.arrays) {
        std::uint64_t count = 1;
        for (auto d : a.shape) count *= d;
        if (count != a.values.size()) throw ShapeError("container: array '" + a.name + "' shape/value count mismatch");
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out.insert(out.end(), a.name.begin(), a.name.end());
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) put_le<std::uint64_t>(out, d);
        for (float v : a.values) put_le<float>(out, v);
    }
    return out;
}

Container decode_container(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    Reader in(bytes, origin);
    if (in.text(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) in.fail("bad magic");
    if (const auto version = in.byte(); version != kContainerVersion)
        throw UnsupportedFormat(origin + ": container version " + std::to_string(version));
    Container c;
    c.header = in.text(in.get<std::uint32_t>());
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedArray a;
        a.name = in.text(in.get<std::uint32_t>());
        const auto rank = in.get<std::uint32_t>();
        if (rank > 16) in.fail("implausible rank");
        std::uint64_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            a.shape.push_back(in.get<std::uint64_t>());
            n *= a.shape.back();
        }
        if (n > bytes.size()) in.fail("array larger than file");
        a.values.resize(n);
        for (auto& v : a.values) v = in.get<float>();
        c.arrays.push_back(std::move(a));
    }
    if (!in.done()) in.fail("trailing bytes");
    return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
    const auto bytes = encode_container(c);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput("failed writing " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_container(bytes, path.string());
}

}  // namespace amt
