#pragma once

// Feynman-Kac numerics for spectrally negative motions (c+ = 0). The dual
// motion -xi has only upward jumps and creeps downward, so it crosses a lower
// barrier continuously and a skeleton walk can locate the crossing.
//
// * picard_phi solves the scaling-limit equation
//     phi(y) = E_y exp(-C2 int_0^{tau_0} phi(-xi_s)^{gamma - 1} ds),  phi(0) = 1
//   by fixed-point iteration over a fixed ensemble of dual paths.
// * check_fk_identity evaluates
//     u(x) = E_x exp(-(1 - m) tau_y - int_0^{tau_y} f(u(-xi_s)) ds) u(y)
//   by Monte Carlo for a given curve u and compares with u(x).
// * estimate_plateau_constant measures how flat x^p u(x) (or e^{a x} u(x))
//   is over a fit window.

#include <cstdint>
#include <optional>
#include <vector>

#include "bsp/offspring.hpp"
#include "bsp/parallel.hpp"
#include "bsp/stable_motion.hpp"
#include "bsp/tail_analysis.hpp"
#include "bsp/tail_curve.hpp"
#include "bsp/tail_estimate.hpp"

namespace bsp {

/// Skeleton control for dual paths: away from the barrier the step grows so
/// that a typical increment is `rel_scale` times the distance to it, but never
/// drops below `step`.
struct DualPathSettings {
  double step = 0.01;
  double rel_scale = 0.2;
  std::uint64_t max_steps = 1'000'000;
};

enum class PhiStart { One, Envelope };

struct PhiSettings {
  std::size_t n_paths = 10'000;
  DualPathSettings path;
  int max_iter = 500;
  double tol = 1e-6;
  double damping = 0.5;
  PhiStart start = PhiStart::One;
};

struct PhiGrid {
  std::vector<double> ys;
  std::vector<double> phi;
  /// Monte Carlo standard error of each phi value at the last sweep.
  std::vector<double> stderr_phi;
  double gamma = 0.0;
  double c2 = 0.0;
  int iterations = 0;
  bool converged = false;
  /// phi(0) = 1, 0 < phi <= 1 and nonincreasing held after every sweep.
  bool invariants_held = true;
  std::vector<double> history;  ///< sup |T(phi) - phi| per sweep, T(phi) made nonincreasing first
  /// Decay rate of the exponential continuation beyond the last grid point.
  double tail_rate = 0.0;
  std::uint64_t paths_escaped = 0;  ///< left the grid upwards
  std::uint64_t paths_budget = 0;   ///< hit max_steps
};

/// Largest y where the lower envelope exp(-(C2 / C1)^{1/alpha} y) is still
/// above `level`.
double phi_grid_extent(const StableParams& motion, const OffspringDist& dist, double level = 1e-4);

/// Requires c+ = 0, a nondegenerate motion, a critical law with C2 > 0, and a
/// grid starting at 0.
PhiGrid picard_phi(const StableParams& motion, const OffspringDist& dist, const std::vector<double>& y_grid,
                   const PhiSettings& settings, const RunSettings& run);

/// phi(y2) >= phi(y1) E_1 exp(-c (y2 - y1)^alpha tau_0) for adjacent grid
/// points, with c = sup C2 phi^{gamma - 1}. The expectation is estimated on
/// the same dual skeleton as phi itself.
struct EnvelopeCheck {
  double c = 0.0;
  std::vector<double> factor;        ///< Monte Carlo E_1 exp(-c dy^alpha tau_0) per pair
  std::vector<double> factor_exact;  ///< closed form of the same expectation
  std::size_t violations = 0;
  double worst_margin = 0.0;  ///< min over pairs of phi(y2) - phi(y1) factor
  bool holds() const { return violations == 0; }
};
EnvelopeCheck check_envelope(const PhiGrid& phi, const StableParams& motion, std::size_t n_paths,
                             const DualPathSettings& path, const RunSettings& run);

struct FkCheck {
  double x = 0.0;
  double y = 0.0;
  double u_x = 0.0;
  double u_y = 0.0;
  double rhs = 0.0;
  double rhs_stderr = 0.0;
  double rel_error = 0.0;
  /// e^{-a0 (x - y)} u(y): the identity with the nonlinear term dropped
  /// (subcritical laws only).
  std::optional<double> first_passage_bound;
  std::uint64_t paths = 0;
  std::uint64_t paths_budget = 0;
};

/// Requires c+ = 0, a nondegenerate motion, 0 <= y <= x, u(y) > 0.
FkCheck check_fk_identity(const StableParams& motion, const OffspringDist& dist, const TailCurve& u, double x,
                          double y, std::size_t n_paths, const DualPathSettings& path, const RunSettings& run);

struct PlateauEstimate {
  double constant = 0.0;  ///< window mean of x^p u_hat (or e^{a x} u_hat)
  double cv = 0.0;        ///< coefficient of variation over the window
  std::vector<double> xs;
  std::vector<double> values;
  bool nonincreasing = false;  ///< values never increase along the window
};

/// Throws InsufficientData if the window holds no point with u_hat > 0.
PlateauEstimate estimate_plateau_constant(const TailEstimate& est, IndexWindow window, TailKind kind,
                                          double exponent_or_rate);

}  // namespace bsp
