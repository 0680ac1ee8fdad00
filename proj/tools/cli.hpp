#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scr::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kSuccess = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs `scr <subcommand> [flags]`. `args[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scr::cli
