#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace edgeseg::cli {

/// Exit codes by error category.
enum ExitCode : int { kOk = 0, kConfigError = 2, kIoError = 3, kNumericError = 4, kInternalError = 5 };

/// Runs the command line `args` (args[0] is the program name). Normal output
/// goes to `out`, the effective config and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace edgeseg::cli
