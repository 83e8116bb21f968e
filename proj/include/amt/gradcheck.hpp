#pragma once

// Finite-difference gradient checks over every network building block and
// both loss families, at small sizes.

#include <cstdint>
#include <string>
#include <vector>

namespace amt {

struct GradSuiteRow {
    std::string component;
    std::uint64_t seed = 0;
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
};

// Components: conv_stack, highway, dilated_block, bilstm, attention,
// fc_head, note_loss, time_loss; one row per component and seed.
std::vector<GradSuiteRow> gradient_suite(const std::vector<std::uint64_t>& seeds);

}  // namespace amt
