#pragma once

namespace xdistill::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kMissingInput = 3,
  kDivergence = 4,
  kInternal = 5,
};

/// Entry point shared by the executable and the CLI tests.
int run(int argc, const char* const* argv);

}  // namespace xdistill::cli
