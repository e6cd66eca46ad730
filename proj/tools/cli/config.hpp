#pragma once

// Run configuration: a plain-text document of `key = value` lines.
//
//   # comment                       blank lines and '#' comments are ignored
//   alpha = 1.2                     numbers use '.' as decimal point
//   offspring = 0.6, 0, 0.4         lists are comma separated
//   x_grid = auto                   or an explicit ascending list
//
// Every key must be known (see README for the full table), and no key may
// appear twice. Parsing also builds the motion and the offspring law, so a
// config that passes parse_config satisfies every precondition that does not
// depend on the subcommand.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bsp/errors.hpp"
#include "bsp/fk_solver.hpp"
#include "bsp/offspring.hpp"
#include "bsp/stable_motion.hpp"
#include "bsp/tail_analysis.hpp"

namespace bsp::cli {

/// Invalid configuration. `line` is 0 when the problem is not tied to one
/// line (a missing key, or an inconsistent combination).
class ConfigError : public Error {
 public:
  ConfigError(std::string message, std::string key, int line = 0)
      : Error(std::move(message)), key_(std::move(key)), line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

struct RunConfig {
  // Motion.
  double alpha = 0.0;
  double c_plus = 0.0;
  double c_minus = 0.0;
  double eta = 0.0;

  // Offspring law: an explicit vector, or the heavy-tail family.
  std::vector<double> offspring;
  bool heavy_family = false;
  std::optional<double> offspring_gamma;
  std::optional<double> offspring_kappa;
  double offspring_mean = 1.0;

  // Tree simulation.
  double step = 0.02;
  std::uint64_t n_reps = 100'000;
  std::optional<std::vector<double>> x_grid;  ///< empty optional: automatic
  double grid_ratio = 1.189207115002721;       ///< 2^{1/4}
  std::uint64_t pilot_reps = 4000;
  std::optional<double> x_max_cap;
  std::uint64_t max_particles = 1'000'000;
  std::optional<double> max_time;
  bool coupled_coarse = false;

  // Survival.
  std::vector<double> t_grid;
  std::uint64_t population_cap = 1'000'000;

  // Tail analysis and verdict tolerances.
  WindowPolicy window;
  double tol_exponent = 0.1;
  double tol_amplitude = 0.25;
  double tol_rate = 0.1;
  double tol_step_bias = 0.03;
  double plateau_cv_max = 0.2;
  double tol_survival = 0.1;
  double survival_spread = 0.2;
  double tol_conjecture = 0.3;

  // Integral equation.
  std::uint64_t kernel_n = 1'000'000;
  std::optional<double> kernel_step;
  double solve_tol = 1e-6;
  double solve_damping = 0.5;
  int solve_max_iter = 2000;
  double solve_fine_step = 0.05;
  double solve_fine_to = 1.0;
  bool compare_mc = true;
  /// tail.csv of an earlier `tail` run to compare against instead of a fresh
  /// simulation.
  std::optional<std::filesystem::path> mc_tail_csv;
  double tol_cross_abs = 0.02;
  double tol_cross_ci = 3.0;
  double remainder_max = 0.05;

  // Scaling-limit equation phi.
  std::optional<double> phi_y_max;
  std::size_t phi_points = 41;
  std::size_t phi_paths = 10'000;
  DualPathSettings phi_path;
  double phi_tol = 1e-6;
  double phi_damping = 0.5;
  int phi_max_iter = 500;
  std::size_t envelope_paths = 10'000;
  double phi_agreement = 2.0;  ///< allowed two-start gap in MC standard errors

  // Small-lambda limits.
  std::vector<double> lambda_grid{0.1, 0.01, 0.001};
  std::uint64_t limit_reps = 1'000'000;
  double limit_step = 0.05;
  double tol_limit = 0.1;

  // Feynman-Kac check.
  double fk_x = 8.0;
  double fk_y = 4.0;
  std::size_t fk_paths = 100'000;
  DualPathSettings fk_path;
  double tol_fk = 0.1;
  double fk_bound_slack = 1.02;

  // Execution.
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::size_t block = 4096;

  /// Key/value pairs as read, sorted by key; hashed into the manifest.
  std::vector<std::pair<std::string, std::string>> entries;

  StableParams motion() const;
  OffspringDist offspring_dist() const;
  RunSettings run() const { return {seed, workers, block}; }
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a over the sorted `key=value` lines.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace bsp::cli
