#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trnav::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;  // bad data or configuration
inline constexpr int kExitUsage = 2;   // malformed command line

/// Runs the command line `args` (args[0] is the program name). Machine
/// output goes to `out`, diagnostics to `err`. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trnav::cli
