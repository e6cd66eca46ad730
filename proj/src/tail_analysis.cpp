#include "bsp/tail_analysis.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "bsp/errors.hpp"
#include "bsp/stats.hpp"

namespace bsp {

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::SubcriticalPosJumps:
      return "SubcriticalPosJumps";
    case Regime::CriticalPosJumps:
      return "CriticalPosJumps";
    case Regime::CriticalSpectrallyNegative:
      return "CriticalSpectrallyNegative";
    case Regime::SubcriticalSpectrallyNegative:
      return "SubcriticalSpectrallyNegative";
    case Regime::Degenerate:
      return "Degenerate";
  }
  return "?";
}

std::string_view kind_name(TailKind k) {
  switch (k) {
    case TailKind::Power:
      return "power";
    case TailKind::Exponential:
      return "exponential";
    case TailKind::None:
      return "none";
  }
  return "?";
}

RegimePrediction classify_regime(const StableParams& motion, const OffspringDist& dist) {
  const double m = dist.mean();
  if (m > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "supercritical offspring law (m = " << m << ") has no tail prediction";
    throw InvalidArgument(msg.str());
  }
  RegimePrediction p;
  if (motion.degenerate()) {
    p.regime = Regime::Degenerate;
    p.kind = TailKind::None;
    p.note = "M = 0 almost surely: the motion never moves above its start";
    return p;
  }
  const bool critical = dist.critical();
  if (critical && !(dist.c2() > 0.0 && dist.gamma() > 1.0 && dist.gamma() <= 2.0)) {
    throw UnsupportedRegime("critical offspring law without a tail index gamma in (1, 2] and C2 > 0: "
                            "no prediction is available");
  }
  const double alpha = motion.alpha;
  if (motion.c_plus > 0.0) {
    p.kind = TailKind::Power;
    if (!critical) {
      p.regime = Regime::SubcriticalPosJumps;
      p.exponent_or_rate = alpha;
      p.constant = motion.c_plus / ((1.0 - m) * alpha);
    } else {
      const double g = dist.gamma();
      p.regime = Regime::CriticalPosJumps;
      p.exponent_or_rate = alpha / g;
      p.constant = std::pow(motion.c_plus / (alpha * dist.c2()), 1.0 / g);
    }
    return p;
  }
  if (critical) {
    p.regime = Regime::CriticalSpectrallyNegative;
    p.kind = TailKind::Power;
    p.exponent_or_rate = alpha / (dist.gamma() - 1.0);
    p.note = "limit constant exists but has no closed form";
    return p;
  }
  if (!motion.c1_alpha) throw UnsupportedRegime("spectrally negative motion without a Laplace exponent");
  p.regime = Regime::SubcriticalSpectrallyNegative;
  p.kind = TailKind::Exponential;
  p.exponent_or_rate = std::pow((1.0 - m) / *motion.c1_alpha, 1.0 / alpha);
  p.note = "limit constant exists but has no closed form";
  return p;
}

bool trusted_point(const TailEstimate& est, std::size_t i, const WindowPolicy& policy) {
  const double u = est.u_hat[i];
  if (!(u > 0.0) || !(est.ci_low[i] > 0.0)) return false;
  const double hw = est.ci_halfwidth(i);
  return hw / u < policy.max_rel_halfwidth && est.bracket(i) < 2.0 * hw;
}

IndexWindow select_window(const TailEstimate& est, const WindowPolicy& policy) {
  std::size_t hi = est.size();
  for (std::size_t i = est.size(); i-- > 0;) {
    if (est.xs[i] > 0.0 && trusted_point(est, i, policy)) {
      hi = i;
      break;
    }
  }
  if (hi == est.size()) throw InsufficientData("no trusted grid point for the tail fit");
  const double x_lo = est.xs[hi] / std::ldexp(1.0, static_cast<int>(policy.octaves));
  IndexWindow w{hi, hi + 1};
  while (w.begin > 0 && est.xs[w.begin - 1] >= x_lo && est.xs[w.begin - 1] > 0.0) --w.begin;
  std::size_t trusted = 0;
  for (std::size_t i = w.begin; i < w.end; ++i) trusted += trusted_point(est, i, policy);
  if (trusted < policy.min_points) {
    std::ostringstream msg;
    msg << "only " << trusted << " trusted points in [" << est.xs[w.begin] << ", " << est.xs[hi]
        << "]; need " << policy.min_points;
    throw InsufficientData(msg.str());
  }
  return w;
}

namespace {

struct FitData {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;
};

// log u_hat with inverse-variance weights; the CI half-width is z sigma of
// u_hat, so sigma(log u_hat) ~ halfwidth / (z u_hat).
FitData usable_points(const TailEstimate& est, IndexWindow window, TailKind kind) {
  if (window.end > est.size() || window.begin > window.end) throw InvalidArgument("tail fit: window outside grid");
  FitData d;
  for (std::size_t i = window.begin; i < window.end; ++i) {
    const double u = est.u_hat[i];
    if (!(u > 0.0) || !(est.ci_low[i] > 0.0)) continue;
    if (kind == TailKind::Power && !(est.xs[i] > 0.0)) continue;
    const double hw = est.ci_halfwidth(i);
    const double rel = hw > 0.0 ? hw / (kZ95 * u) : 1e-12;
    d.x.push_back(kind == TailKind::Power ? std::log(est.xs[i]) : est.xs[i]);
    d.y.push_back(std::log(u));
    d.w.push_back(1.0 / (rel * rel));
  }
  if (d.x.size() < 4) {
    std::ostringstream msg;
    msg << "tail fit needs 4 usable points, window has " << d.x.size();
    throw InsufficientData(msg.str());
  }
  return d;
}

}  // namespace

TailFit fit_tail(const TailEstimate& est, TailKind kind, IndexWindow window) {
  if (kind == TailKind::None) throw InvalidArgument("tail fit: no tail kind");
  const FitData d = usable_points(est, window, kind);
  const LineFit lf = weighted_line_fit(d.x, d.y, d.w);
  TailFit f;
  f.kind = kind;
  f.value = -lf.slope;
  f.value_stderr = lf.slope_stderr;
  f.amplitude = std::exp(lf.intercept);
  f.log_amplitude_stderr = lf.intercept_stderr;
  f.window = window;
  f.points = d.x.size();
  return f;
}

TailFit fit_power(const TailEstimate& est, IndexWindow window) { return fit_tail(est, TailKind::Power, window); }

TailFit fit_exponential(const TailEstimate& est, IndexWindow window) {
  return fit_tail(est, TailKind::Exponential, window);
}

PinnedAmplitude pinned_amplitude(const TailEstimate& est, IndexWindow window, TailKind kind, double exponent_or_rate) {
  if (kind == TailKind::None) throw InvalidArgument("pinned amplitude: no tail kind");
  const FitData d = usable_points(est, window, kind);
  double sw = 0.0;
  double swy = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    sw += d.w[i];
    swy += d.w[i] * (d.y[i] + exponent_or_rate * d.x[i]);
  }
  return {std::exp(swy / sw), std::sqrt(1.0 / sw)};
}

double numeric_laplace(const std::vector<double>& xs, const std::vector<double>& f, double lambda,
                       const std::optional<TailModel>& tail) {
  if (xs.size() != f.size() || xs.size() < 2) throw InvalidArgument("numeric_laplace: need matching grids of size >= 2");
  if (xs.front() != 0.0) throw InvalidArgument("numeric_laplace: grid must start at 0");
  if (!(lambda > 0.0)) throw InvalidArgument("numeric_laplace: lambda must be positive");
  const double x_max = xs.back();
  if (!tail && lambda * x_max < 30.0) {
    throw InvalidArgument("numeric_laplace: grid too short (lambda * x_max < 30) and no tail model");
  }
  CompensatedSum s;
  double prev = f[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) throw InvalidArgument("numeric_laplace: grid must be strictly ascending");
    const double cur = std::exp(-lambda * xs[i]) * f[i];
    s.add(0.5 * (xs[i] - xs[i - 1]) * (prev + cur));
    prev = cur;
  }
  if (tail) {
    const TailModel& t = *tail;
    switch (t.kind) {
      case TailKind::Exponential:
        s.add(t.amplitude * std::exp(-(lambda + t.exponent_or_rate) * x_max) / (lambda + t.exponent_or_rate));
        break;
      case TailKind::None:
        s.add(t.amplitude * std::exp(-lambda * x_max) / lambda);
        break;
      case TailKind::Power: {
        // int_{x_max}^inf A x^{-p} e^{-lambda x} dx, substituting x = x_max + y.
        boost::math::quadrature::exp_sinh<double> q;
        const double p = t.exponent_or_rate;
        const double scale = std::exp(-lambda * x_max);
        auto g = [&](double y) { return std::pow(1.0 + y / x_max, -p) * std::exp(-lambda * y); };
        s.add(t.amplitude * std::pow(x_max, -p) * scale * q.integrate(g));
        break;
      }
    }
  }
  return s.value();
}

namespace {

struct LimitAcc {
  std::vector<MomentAccumulator> s_terms;
  std::vector<MomentAccumulator> xi_terms;
};

}  // namespace

SmallLambdaReport verify_small_lambda_limits(const StableParams& motion, double step, std::uint64_t n_reps,
                                             const std::vector<double>& lambda_grid, const RunSettings& run) {
  if (!(motion.c_plus > 0.0)) throw InvalidArgument("small-lambda limits need positive jumps (c_plus > 0)");
  if (n_reps == 0) throw InvalidArgument("small-lambda limits: n_reps must be positive");
  if (lambda_grid.empty()) throw InvalidArgument("small-lambda limits: empty lambda grid");
  for (double l : lambda_grid) {
    if (!(l > 0.0)) throw InvalidArgument("small-lambda limits: lambda must be positive");
  }
  const double alpha = motion.alpha;
  SmallLambdaReport rep;
  rep.second_order = alpha >= 1.0;
  rep.n = n_reps;

  const std::size_t g = lambda_grid.size();
  const StableSampler sampler(motion);
  auto task = [&](std::size_t t) {
    LimitAcc acc{std::vector<MomentAccumulator>(g), std::vector<MomentAccumulator>(g)};
    RngStream rng(run.seed, StreamPurpose::kLimits, t);
    const std::uint64_t begin = static_cast<std::uint64_t>(t) * run.block;
    const std::uint64_t end = std::min<std::uint64_t>(n_reps, begin + run.block);
    for (std::uint64_t i = begin; i < end; ++i) {
      const auto [xi, s] = sample_exp_pair(sampler, step, rng);
      const double xi_plus = std::max(xi, 0.0);
      for (std::size_t k = 0; k < g; ++k) {
        const double z = lambda_grid[k] * s;
        if (rep.second_order) {
          // 1 - e^{-z} (1 + z)
          acc.s_terms[k].add(-std::expm1(-z) - z * std::exp(-z));
          const double zp = lambda_grid[k] * xi_plus;
          acc.xi_terms[k].add(-std::expm1(-zp) - zp * std::exp(-zp));
        } else {
          acc.s_terms[k].add(-std::expm1(-z));
        }
      }
    }
    return acc;
  };
  auto merge = [](LimitAcc& into, LimitAcc&& part) {
    for (std::size_t k = 0; k < into.s_terms.size(); ++k) {
      into.s_terms[k].merge(part.s_terms[k]);
      into.xi_terms[k].merge(part.xi_terms[k]);
    }
  };
  const LimitAcc total = run_tasks(block_count(n_reps, run.block), run.workers, task, merge,
                                   LimitAcc{std::vector<MomentAccumulator>(g), std::vector<MomentAccumulator>(g)});

  if (rep.second_order) {
    rep.limit = motion.c_plus * std::tgamma(2.0 - alpha) / alpha;
  } else {
    rep.limit = motion.c_plus / alpha;
  }
  for (std::size_t k = 0; k < g; ++k) {
    const double lambda = lambda_grid[k];
    // lambda eta(lambda) = Gamma(1 - alpha) lambda^alpha for alpha < 1; the
    // second-order normalisation is lambda^2 lambda^{alpha - 2}.
    const double norm = rep.second_order ? std::pow(lambda, alpha) : std::tgamma(1.0 - alpha) * std::pow(lambda, alpha);
    LimitPoint pt;
    pt.lambda = lambda;
    pt.ratio = total.s_terms[k].mean() / norm;
    pt.ratio_stderr = total.s_terms[k].standard_error() / norm;
    pt.rel_error = std::abs(pt.ratio / rep.limit - 1.0);
    if (rep.second_order) pt.ratio_xi_plus = total.xi_terms[k].mean() / norm;
    rep.points.push_back(pt);
  }
  rep.error_decreasing = true;
  for (std::size_t k = 1; k < g; ++k) {
    if (!(rep.points[k].rel_error < rep.points[k - 1].rel_error)) rep.error_decreasing = false;
  }
  return rep;
}

PhiValues phi_functionals(const TailCurve& u, const PairKernel& kernel, const OffspringDist& dist, double x) {
  if (kernel.n() == 0) throw InvalidArgument("phi_functionals: empty kernel");
  const std::size_t below = kernel.count_below(x);
  double su = 0.0;
  double sg = 0.0;
  for (std::size_t j = 0; j < below; ++j) {
    const double v = std::clamp(u(x - kernel.xi()[j]), 0.0, 1.0);
    su += v;
    sg += dist.big_g(v);
  }
  const double n = static_cast<double>(kernel.n());
  return {(1.0 - dist.mean()) * su / n, sg / n};
}

PhiSandwich critical_sandwich(const TailCurve& u, const PairKernel& kernel, const OffspringDist& dist, double x,
                              double eps) {
  if (!dist.critical()) throw InvalidArgument("critical_sandwich: needs a critical law");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("critical_sandwich: eps must lie in (0, 1)");
  const double delta = dist.generating_band(eps);
  if (!(delta > 0.0)) throw InvalidArgument("critical_sandwich: G(u)/u^gamma never enters the band");
  const double g = dist.gamma();
  const double c2 = dist.c2();
  const std::size_t below = kernel.count_below(x);
  double s_g = 0.0;
  double s_g1 = 0.0;
  double s_r = 0.0;
  for (std::size_t j = 0; j < below; ++j) {
    const double v = std::clamp(u(x - kernel.xi()[j]), 0.0, 1.0);
    const double vg = std::pow(v, g);
    s_g += vg;
    s_g1 += vg * v;
    s_r += dist.big_g(v);
  }
  const double n = static_cast<double>(kernel.n());
  s_g /= n;
  s_g1 /= n;
  PhiSandwich out;
  out.delta = delta;
  out.phi_r = s_r / n;
  out.lower = (1.0 - eps) * c2 * (s_g - s_g1 / delta);
  out.upper = (1.0 + eps) * c2 * s_g + s_g1 / std::pow(delta, g + 1.0);
  return out;
}

}  // namespace bsp
