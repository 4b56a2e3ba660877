#pragma once

#include <string>
#include <vector>

namespace glmtilt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitGateFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one subcommand (solve, sweep, simulate, compare, validate). `args`
/// excludes the program name.
int run(const std::vector<std::string>& args);

/// Reads a flat key=value file into `--key value` arguments. Blank lines and
/// lines starting with '#' are skipped; '_' in keys becomes '-'.
std::vector<std::string> config_file_arguments(const std::string& path);

}  // namespace glmtilt::cli
