#pragma once

// Subcommands of the experiment runner. Each one validates the config for its
// own needs (ConfigError), runs the library operations, writes its outputs
// into the output directory (when one is given), and returns its JSON report.
//
// Every report carries a "verdict" object:
//   {"pass": bool, "checks": [{"name", "value", "target", "pass"}, ...]}
// and a command that iterates to convergence sets "converged".

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cli/config.hpp"
#include "json.hpp"

namespace bsp::cli {

using Json = nlohmann::ordered_json;

enum class Command { Predict, Tail, Survival, SolveIntegral, SolvePhi, VerifyLimits, FkCheck, Report };

std::string_view command_name(Command c);

struct Options {
  std::optional<std::filesystem::path> out;
  bool check = false;
};

struct CommandResult {
  Json report;
  bool pass = true;
  bool converged = true;
  std::vector<std::string> outputs;  ///< file names written into the output directory
};

/// Runs one subcommand. `Report` ignores the config and summarizes the
/// reports already present in the output directory.
CommandResult run_command(Command cmd, const RunConfig& cfg, const Options& opts);

/// Grid used by `tail` when x_grid = auto: geometric with ratio grid_ratio,
/// from where a pilot estimate of u crosses 1/2 to where n_reps u is
/// projected to fall to 100.
std::vector<double> auto_x_grid(const RunConfig& cfg);

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNoConvergence = 3;
inline constexpr int kExitVerdict = 4;

/// Full command-line entry point (argument parsing, error reporting, exit
/// code).
int main_entry(int argc, char** argv);

}  // namespace bsp::cli
