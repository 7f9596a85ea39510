#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace weightflow {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitRuntime = 3 };

/// Entry point behind the `weightflow` executable; `args` excludes the
/// program name. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace weightflow
