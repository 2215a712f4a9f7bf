#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Runs the command line (without the program name). Machine-readable
/// output goes to `out`, human summaries to `err`. Returns the exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wr
