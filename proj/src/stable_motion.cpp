#include "bsp/stable_motion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bsp/errors.hpp"

namespace bsp {

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t step_count(double duration, double step) {
  const double n = std::ceil(duration / step * (1.0 - 1e-12));
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

}  // namespace

bool StableParams::degenerate() const {
  if (!spectrally_negative()) return false;
  if (alpha < 1.0) return true;
  if (alpha == 1.0) return eta >= 0.0;
  return false;
}

StableParams derive_params(double alpha, double c_plus, double c_minus, double eta) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw InvalidArgument("alpha must lie in (0, 2), got " + std::to_string(alpha));
  if (!(c_plus >= 0.0) || !(c_minus >= 0.0)) throw InvalidArgument("jump weights c_plus, c_minus must be >= 0");
  if (!std::isfinite(eta)) throw InvalidArgument("eta must be finite");

  StableParams p;
  p.alpha = alpha;
  p.c_plus = c_plus;
  p.c_minus = c_minus;
  p.eta = eta;

  const double total = c_plus + c_minus;
  if (alpha == 1.0) {
    if (c_plus != c_minus) throw InvalidArgument("a strictly 1-stable motion needs c_plus == c_minus");
    if (total == 0.0 && eta == 0.0) throw InvalidArgument("alpha = 1 without jumps needs a nonzero drift eta");
    p.beta = 0.0;
    p.c_star = 0.5 * kPi * total;
  } else {
    if (total == 0.0) throw InvalidArgument("at least one of c_plus, c_minus must be positive");
    p.beta = (c_plus - c_minus) / total;
    p.c_star = -total * std::tgamma(-alpha) * std::cos(0.5 * kPi * alpha);
    p.eta = 0.0;
  }

  if (c_plus == 0.0) {
    if (alpha > 1.0) {
      // -Psi(-i) for beta = -1: the Laplace exponent of a spectrally negative
      // stable law is c_star / |cos(pi alpha / 2)|.
      p.c1_alpha = p.c_star / -std::cos(0.5 * kPi * alpha);
    } else if (alpha == 1.0 && eta < 0.0) {
      p.c1_alpha = -eta;
    }
  }
  return p;
}

double levy_tail(const StableParams& params, double x) {
  if (!(x > 0.0)) throw InvalidArgument("levy_tail: x must be positive");
  return params.c_plus * std::pow(x, -params.alpha) / params.alpha;
}

double exp_moment(const StableParams& params, double lambda) {
  if (!params.c1_alpha) throw InvalidArgument("exp_moment: needs a nondegenerate spectrally negative motion");
  if (!(lambda >= 0.0)) throw InvalidArgument("exp_moment: lambda must be >= 0");
  return std::exp(*params.c1_alpha * std::pow(lambda, params.alpha));
}

double first_passage_laplace(const StableParams& params, double lambda, double distance) {
  if (!params.c1_alpha) throw InvalidArgument("first_passage_laplace: needs a nondegenerate spectrally negative motion");
  if (!(lambda > 0.0)) throw InvalidArgument("first_passage_laplace: lambda must be positive");
  if (!(distance >= 0.0)) throw InvalidArgument("first_passage_laplace: distance must be >= 0");
  const double ia = 1.0 / params.alpha;
  return std::exp(-std::pow(*params.c1_alpha, -ia) * std::pow(lambda, ia) * distance);
}

StableSampler::StableSampler(const StableParams& params) : params_(params) {
  inv_alpha_ = 1.0 / params.alpha;
  if (params.alpha != 1.0) {
    sigma_ = std::pow(params.c_star, inv_alpha_);
    const double t = params.beta * std::tan(0.5 * kPi * params.alpha);
    skew_shift_ = std::atan(t) / params.alpha;
    skew_scale_ = std::pow(1.0 + t * t, 0.5 * inv_alpha_);
    tail_power_ = (1.0 - params.alpha) / params.alpha;
  } else {
    sigma_ = params.c_star;
  }
}

double StableSampler::time_scale(double t) const {
  return params_.alpha == 1.0 ? t : std::pow(t, inv_alpha_);
}

double StableSampler::unit(RngStream& rng) const {
  const double alpha = params_.alpha;
  if (alpha == 1.0) {
    // xi_1 = c_star * Cauchy - eta
    if (sigma_ == 0.0) return -params_.eta;
    const double v = kPi * (rng.uniform_open() - 0.5);
    return sigma_ * std::tan(v) - params_.eta;
  }
  const double v = kPi * (rng.uniform_open() - 0.5);
  const double w = rng.exponential();
  const double a = alpha * (v + skew_shift_);
  // S sin(a) / cos(v)^{1/alpha} * (cos(v - a) / w)^{(1 - alpha) / alpha}, with
  // both powers folded into one exponential
  const double log_mag = tail_power_ * (std::log(std::cos(v - a)) - std::log(w)) - inv_alpha_ * std::log(std::cos(v));
  return sigma_ * skew_scale_ * std::sin(a) * std::exp(log_mag);
}

PathSkeleton sample_path_skeleton(const StableParams& params, double horizon, double step, RngStream& rng) {
  if (!(horizon > 0.0)) throw InvalidArgument("sample_path_skeleton: horizon must be positive");
  if (!(step > 0.0 && step <= horizon)) throw InvalidArgument("sample_path_skeleton: need 0 < step <= horizon");
  const StableSampler sampler(params);
  const std::size_t n = step_count(horizon, step);
  const double dt = horizon / static_cast<double>(n);
  const double scale = sampler.time_scale(dt);

  PathSkeleton path;
  path.times.resize(n + 1);
  path.positions.resize(n + 1);
  path.running_max.resize(n + 1);
  double pos = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    pos += scale * sampler.unit(rng);
    path.times[i] = static_cast<double>(i) * dt;
    path.positions[i] = pos;
    path.running_max[i] = std::max(path.running_max[i - 1], pos);
  }
  path.times[n] = horizon;
  return path;
}

SegmentWalk walk_segment(const StableSampler& sampler, double start, double duration, double step,
                         RngStream& rng, bool coupled_coarse) {
  SegmentWalk out{start, start, start};
  if (!(duration > 0.0)) return out;
  std::size_t n = step_count(duration, step);
  if (coupled_coarse && (n % 2 == 1)) ++n;
  const double dt = duration / static_cast<double>(n);
  const double scale = sampler.time_scale(dt);

  double pos = start;
  double mx = start;
  if (coupled_coarse) {
    double cmx = start;
    for (std::size_t i = 0; i < n; i += 2) {
      pos += scale * sampler.unit(rng);
      mx = std::max(mx, pos);
      pos += scale * sampler.unit(rng);
      mx = std::max(mx, pos);
      cmx = std::max(cmx, pos);
    }
    out.coarse_max = cmx;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      pos += scale * sampler.unit(rng);
      mx = std::max(mx, pos);
    }
    out.coarse_max = mx;
  }
  out.end = pos;
  out.max = mx;
  return out;
}

std::pair<double, double> sample_exp_pair(const StableSampler& sampler, double step, RngStream& rng) {
  if (!(step > 0.0)) throw InvalidArgument("sample_exp_pair: step must be positive");
  const double life = rng.exponential();
  const SegmentWalk w = walk_segment(sampler, 0.0, life, step, rng);
  return {w.end, std::max(0.0, w.max)};
}

}  // namespace bsp
