#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace confident::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitUsage = 64;

/// Runs one CLI invocation. `args` excludes the program name. Reports go to
/// `out`, warnings and errors to `err`; the return value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace confident::cli
