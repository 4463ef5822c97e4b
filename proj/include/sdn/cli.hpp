#pragma once

#include <string>
#include <vector>

namespace sdn {

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_runtime_error = 1, exit_usage_error = 2 };

/// Entry point for `sdn <subcommand> ...`; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

} // namespace sdn
