#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hetfx::cli {

// Process exit statuses.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitWarning = 2,
  kExitUsage = 64,
  kExitData = 65,
};

// Runs one command line (args[0] is the program name). Normal output goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetfx::cli
