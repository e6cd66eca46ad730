#pragma once

// Regime classification with the predicted tail of u(x) = P(M >= x), tail
// fits on Monte Carlo estimates, Laplace transforms on a grid, small-lambda
// checks of the lifetime maximum S_e, and the one-step functionals Phi_0 and
// Phi_R of the integral equation for u.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bsp/offspring.hpp"
#include "bsp/pair_kernel.hpp"
#include "bsp/parallel.hpp"
#include "bsp/stable_motion.hpp"
#include "bsp/tail_curve.hpp"
#include "bsp/tail_estimate.hpp"

namespace bsp {

enum class Regime {
  SubcriticalPosJumps,
  CriticalPosJumps,
  CriticalSpectrallyNegative,
  SubcriticalSpectrallyNegative,
  Degenerate,
};

std::string_view regime_name(Regime r);
std::string_view kind_name(TailKind k);

struct RegimePrediction {
  Regime regime = Regime::Degenerate;
  TailKind kind = TailKind::None;
  /// Power exponent p in u ~ C x^{-p}, or rate a in u ~ C e^{-a x}.
  double exponent_or_rate = 0.0;
  /// Known limit constant; absent when only existence is known.
  std::optional<double> constant;
  std::string note;

  TailShape shape() const { return {kind, exponent_or_rate}; }
};

/// Predicted tail of M:
///   c+ > 0, m < 1:            x^{-alpha}, constant c+ / ((1 - m) alpha)
///   c+ > 0, m = 1:            x^{-alpha/gamma}, constant (c+ / (alpha C2))^{1/gamma}
///   c+ = 0, m = 1:            x^{-alpha/(gamma - 1)}, constant unknown
///   c+ = 0, m < 1:            e^{-a0 x}, a0 = ((1 - m) / C1)^{1/alpha}, constant unknown
///   -xi a subordinator or nonpositive drift: M = 0.
/// Throws InvalidArgument for m > 1 and UnsupportedRegime for a critical law
/// without a usable tail index (C2 = 0).
RegimePrediction classify_regime(const StableParams& motion, const OffspringDist& dist);

/// Half-open index range [begin, end) into a TailEstimate.
struct IndexWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct WindowPolicy {
  /// A point is trusted when its CI half-width relative to u_hat is below this
  /// and its truncation bracket is narrower than its CI.
  double max_rel_halfwidth = 0.25;
  /// The window spans [x_hi / 2^octaves, x_hi].
  unsigned octaves = 4;
  std::size_t min_points = 4;
};

bool trusted_point(const TailEstimate& est, std::size_t i, const WindowPolicy& policy);

/// Window ending at the farthest trusted point x_hi and reaching down to
/// x_hi / 2^octaves. Throws InsufficientData if fewer than min_points trusted
/// points fall inside.
IndexWindow select_window(const TailEstimate& est, const WindowPolicy& policy = {});

struct TailFit {
  TailKind kind = TailKind::Power;
  double value = 0.0;  ///< exponent (power) or rate (exponential)
  double value_stderr = 0.0;
  double amplitude = 0.0;
  double log_amplitude_stderr = 0.0;
  IndexWindow window;
  std::size_t points = 0;
};

/// Weighted least squares of log u_hat on log x, weights (u_hat / halfwidth)^2.
/// Points with u_hat = 0 or ci_low = 0 are skipped; needs 4 usable points.
TailFit fit_power(const TailEstimate& est, IndexWindow window);
/// Same on x instead of log x.
TailFit fit_exponential(const TailEstimate& est, IndexWindow window);
TailFit fit_tail(const TailEstimate& est, TailKind kind, IndexWindow window);

/// Amplitude with the exponent (or rate) held fixed: the weighted geometric
/// mean of x^p u_hat (or e^{a x} u_hat) over the window, same weights as the
/// free fit.
struct PinnedAmplitude {
  double amplitude = 0.0;
  double log_stderr = 0.0;
};
PinnedAmplitude pinned_amplitude(const TailEstimate& est, IndexWindow window, TailKind kind, double exponent_or_rate);

/// int_0^inf e^{-lambda x} f(x) dx: trapezoid rule on the grid (which must
/// start at 0) plus the integral of `tail` beyond the last node. Without a
/// tail model, lambda * x_max must be at least 30.
double numeric_laplace(const std::vector<double>& xs, const std::vector<double>& f, double lambda,
                       const std::optional<TailModel>& tail = std::nullopt);

struct LimitPoint {
  double lambda = 0.0;
  double ratio = 0.0;
  double ratio_stderr = 0.0;
  double rel_error = 0.0;  ///< |ratio / limit - 1|
  /// Same ratio with S_e replaced by max(xi_e, 0); second-order path only.
  std::optional<double> ratio_xi_plus;
};

struct SmallLambdaReport {
  /// false: (1 - E e^{-lambda S}) / (lambda eta(lambda)), eta = Gamma(1 - alpha) lambda^{alpha - 1}.
  /// true:  (1 - E e^{-lambda S} - lambda E[S e^{-lambda S}]) / lambda^alpha.
  bool second_order = false;
  double limit = 0.0;
  std::vector<LimitPoint> points;
  /// Relative error strictly decreasing along the lambda grid as given.
  bool error_decreasing = false;
  std::uint64_t n = 0;
};

/// Monte Carlo over n_reps draws of (xi_e, S_e). alpha < 1 uses the
/// first-order ratio with limit c+ / alpha; alpha in [1, 2) the second-order
/// ratio with limit c+ Gamma(2 - alpha) / alpha. Requires c+ > 0.
SmallLambdaReport verify_small_lambda_limits(const StableParams& motion, double step, std::uint64_t n_reps,
                                             const std::vector<double>& lambda_grid, const RunSettings& run);

struct PhiValues {
  double phi0 = 0.0;  ///< (1 - m) E[1{S < x} u(x - xi)]
  double phi_r = 0.0;  ///< E[1{S < x} G(u(x - xi))]
};

PhiValues phi_functionals(const TailCurve& u, const PairKernel& kernel, const OffspringDist& dist, double x);

/// Bounds on Phi_R for a critical law: with delta the width of the band where
/// G(v) / v^gamma stays within C2 (1 +- eps),
///   lower = (1 - eps) C2 (E[u^gamma] - E[u^{gamma + 1}] / delta)
///   upper = (1 + eps) C2 E[u^gamma] + E[u^{gamma + 1}] / delta^{gamma + 1}
/// with all expectations restricted to S < x.
struct PhiSandwich {
  double lower = 0.0;
  double phi_r = 0.0;
  double upper = 0.0;
  double delta = 0.0;
};
PhiSandwich critical_sandwich(const TailCurve& u, const PairKernel& kernel, const OffspringDist& dist, double x,
                              double eps);

}  // namespace bsp
