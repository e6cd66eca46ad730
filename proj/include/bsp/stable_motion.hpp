#pragma once

// Strictly alpha-stable motions: parameterization, sampling, and the closed
// forms available for them.
//
// The Levy measure is c_plus x^{-1-alpha} dx on (0, inf) plus
// c_minus |x|^{-1-alpha} dx on (-inf, 0). Internally the law is carried in
// (scale, skewness) form: c_star = -(c_plus + c_minus) Gamma(-alpha) cos(pi alpha / 2)
// and beta = (c_plus - c_minus) / (c_plus + c_minus) for alpha != 1, and
// (c_star, eta) with c_star = (pi / 2)(c_plus + c_minus) for alpha = 1.

#include <optional>
#include <utility>
#include <vector>

#include "bsp/rng.hpp"

namespace bsp {

struct StableParams {
  double alpha = 1.5;
  double c_plus = 0.0;
  double c_minus = 0.0;
  double eta = 0.0;
  double beta = 0.0;
  double c_star = 0.0;
  /// C1(alpha) with E exp(lambda xi_1) = exp(C1 lambda^alpha); present only for
  /// nondegenerate spectrally negative motions.
  std::optional<double> c1_alpha;

  bool has_jumps() const { return c_plus + c_minus > 0.0; }
  bool pure_drift() const { return !has_jumps(); }
  bool spectrally_negative() const { return c_plus == 0.0; }
  /// M = 0 almost surely: -xi is a subordinator, or xi is a non-increasing drift.
  bool degenerate() const;
};

/// Validates the raw Levy-measure parameters and fills the derived fields.
/// Throws InvalidArgument on alpha outside (0,2), negative weights, alpha = 1
/// with c_plus != c_minus, or no jumps outside the alpha = 1 pure-drift case.
StableParams derive_params(double alpha, double c_plus, double c_minus, double eta = 0.0);

/// nu((x, inf)) = c_plus x^{-alpha} / alpha.
double levy_tail(const StableParams& params, double x);

/// E exp(lambda xi_1) = exp(C1 lambda^alpha). Spectrally negative only.
double exp_moment(const StableParams& params, double lambda);

/// E_x exp(-lambda tau_y) = exp(-C1^{-1/alpha} lambda^{1/alpha} (y - x)).
double first_passage_laplace(const StableParams& params, double lambda, double distance);

/// Draws xi_t. Cheap to copy; immutable after construction.
class StableSampler {
 public:
  explicit StableSampler(const StableParams& params);

  const StableParams& params() const { return params_; }

  /// One draw of xi_1 (Chambers-Mallows-Stuck for alpha != 1).
  double unit(RngStream& rng) const;

  /// t^{1/alpha}, the self-similarity factor.
  double time_scale(double t) const;

  /// One draw of xi_t = t^{1/alpha} xi_1 (in law).
  double increment(double t, RngStream& rng) const { return time_scale(t) * unit(rng); }

 private:
  StableParams params_;
  double inv_alpha_ = 1.0;
  double sigma_ = 0.0;  // c_star^{1/alpha}
  double skew_shift_ = 0.0;
  double skew_scale_ = 1.0;
  double tail_power_ = 0.0;  // (1 - alpha) / alpha
};

/// Discretized path on the grid {0, dt, 2 dt, ..., horizon}.
struct PathSkeleton {
  std::vector<double> times;
  std::vector<double> positions;
  std::vector<double> running_max;
};

/// Skeleton with ceil(horizon / step) equal steps (dt <= step).
PathSkeleton sample_path_skeleton(const StableParams& params, double horizon, double step, RngStream& rng);

/// Endpoint and maximum of a skeleton walk of given duration.
struct SegmentWalk {
  double end = 0.0;
  double max = 0.0;
  /// Maximum over every other grid point (the coupled half-resolution skeleton);
  /// only filled when requested.
  double coarse_max = 0.0;
};

/// Walks the skeleton of xi over [0, duration] from `start` with
/// ceil(duration / step) equal steps. With `coupled_coarse`, the step count is
/// rounded up to an even number and the maximum over even-indexed grid points
/// is reported as well, i.e. the skeleton of step 2 * step built from the
/// same increments.
SegmentWalk walk_segment(const StableSampler& sampler, double start, double duration, double step,
                         RngStream& rng, bool coupled_coarse = false);

/// (xi_e, S_e) at an independent Exp(1) time on the skeleton of given step.
std::pair<double, double> sample_exp_pair(const StableSampler& sampler, double step, RngStream& rng);

}  // namespace bsp
