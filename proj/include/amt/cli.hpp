#pragma once

// Batch command-line surface: synth, featurize, train, transcribe, evaluate,
// gradcheck, table.

#include <iosfwd>

namespace amt {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Exit codes: 0 success, 1 data or runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace amt
