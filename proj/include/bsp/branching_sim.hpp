#pragma once

// Simulation of the branching stable process: every particle moves as the
// stable motion for an Exp(1) lifetime, then dies and leaves K offspring at
// its death position.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsp/offspring.hpp"
#include "bsp/parallel.hpp"
#include "bsp/rng.hpp"
#include "bsp/stable_motion.hpp"
#include "bsp/stats.hpp"
#include "bsp/tail_estimate.hpp"

namespace bsp {

struct SimConfig {
  /// Skeleton step within a lifetime; each lifetime L is cut into ceil(L / step)
  /// equal pieces.
  double step = 0.02;
  /// Cap on the number of particles ever created in one tree.
  std::uint64_t max_particles = 1'000'000;
  /// No particle is followed past this time.
  double max_time = std::numeric_limits<double>::infinity();
  /// Times at which the number of living particles is recorded.
  std::vector<double> record_population_at;
  /// Stop as soon as the skeleton maximum reaches this level. Every grid point
  /// at or below the level is then a certain hit, so nothing is lost for tail
  /// estimation.
  std::optional<double> stop_level;
  /// Also track the maximum over the half-resolution skeleton built from the
  /// same increments (step-halving study).
  bool coupled_coarse = false;
  /// Keep the (birth, death) interval of every particle.
  bool keep_log = false;

  void validate() const;
};

struct TreeOutcome {
  double m_skeleton = 0.0;
  double m_coarse = 0.0;  ///< only meaningful with SimConfig::coupled_coarse
  bool extinct = false;
  double extinction_time = 0.0;  ///< valid iff extinct
  bool truncated = false;
  bool stopped = false;  ///< hit SimConfig::stop_level
  std::uint64_t total_particles = 0;
  std::vector<std::uint64_t> alive_at;
  std::vector<std::pair<double, double>> lifespans;  ///< with SimConfig::keep_log
};

TreeOutcome simulate_tree(const StableSampler& motion, const OffspringDist& dist, const SimConfig& config,
                          RngStream& rng);
TreeOutcome simulate_tree(const StableParams& motion, const OffspringDist& dist, const SimConfig& config,
                          RngStream& rng);

struct TailRun {
  TailEstimate estimate;
  std::optional<TailEstimate> coarse;  ///< half-resolution skeleton, same trees
  MomentAccumulator particles;
  std::uint64_t stopped = 0;
  std::vector<std::string> warnings;
};

/// Default horizon: 4 x_max^{alpha (1 - 1/gamma)} for critical laws, unbounded
/// for subcritical ones.
double default_max_time(const StableParams& motion, const OffspringDist& dist, double x_max);

/// u_hat(x) over x_grid from n_reps independent trees. Rejects m > 1.
TailRun estimate_tail(const StableParams& motion, const OffspringDist& dist, const std::vector<double>& x_grid,
                      std::uint64_t n_reps, const SimConfig& config, const RunSettings& run);

struct SurvivalCurve {
  std::vector<double> ts;
  std::vector<double> q_hat;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<std::uint64_t> alive;
  std::uint64_t n = 0;
  /// Trees whose population reached the cap and were counted as surviving
  /// every remaining grid time.
  std::uint64_t capped = 0;
};

/// Q_hat(t) = P(N_t >= 1) for a critical law from n_reps population
/// trajectories (no motion). Rejects m != 1.
SurvivalCurve estimate_survival(const OffspringDist& dist, const std::vector<double>& t_grid, std::uint64_t n_reps,
                                const RunSettings& run, std::uint64_t population_cap = 1'000'000);

}  // namespace bsp
