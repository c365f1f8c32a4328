#pragma once
// sparse-ct-lab <subcommand> --config <path> [--set key=value ...]
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
#include <ostream>
#include <string>
#include <vector>

namespace sct::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// args excludes the program name. Diagnostics go to err, results to out.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sct::cli
