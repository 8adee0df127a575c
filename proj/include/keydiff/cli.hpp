#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace keydiff {

enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,
  kExitEmpty = 3,
  kExitParams = 4,
  kExitSelection = 5,
};

/// Runs the command line (args excludes the program name). Reports go to
/// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace keydiff
