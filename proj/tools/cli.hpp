#pragma once

#include <ostream>

namespace sslab {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitMissing = 3, kExitRuntime = 4 };

/// Parses argv, dispatches a subcommand and maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sslab
