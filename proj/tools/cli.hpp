#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace nodefilter::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kInputError = 2,
  kConfigMismatch = 3,
  kNumericalAbort = 4,
};

// Entry point of the `nodefilter` tool. Diagnostics go to err; the final
// key=value metrics record is the last line written to out.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace nodefilter::cli
