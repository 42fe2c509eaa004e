#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace malis {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs `malis <subcommand> [flags]`; args excludes the program name.
/// Subcommands: synth, train, segment, evaluate, gradcheck.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Splits a `key=value` file into `--key=value` arguments for every key not
/// already present in args. Blank lines and lines starting with '#' are skipped.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args,
                                           const std::string& config_path);

}  // namespace malis
