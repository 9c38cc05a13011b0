#pragma once

#include <iosfwd>

namespace haloscope {

/// Exit codes shared by all verbs.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitProvenance = 3,
  kExitEmpty = 4,
};

/// Entry point of the `haloscope` tool; writes reports to `out` and
/// diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace haloscope
