#include "bsp/offspring.hpp"

#include <algorithm>
#include <boost/math/special_functions/zeta.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "bsp/errors.hpp"
#include "bsp/stats.hpp"

namespace bsp {

namespace {

constexpr int kZetaTerms = 40;
// Below this value of b = -log(1 - x) the polylog expansion is used, above it
// the geometric series.
constexpr double kSeriesCrossover = 1.0;
constexpr double kMaxDraw = 0x1.0p62;

}  // namespace

OffspringDist OffspringDist::make_explicit(std::vector<double> p) {
  if (p.empty()) throw InvalidArgument("offspring vector is empty");
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= 0.0) || !std::isfinite(p[k])) {
      throw InvalidArgument("offspring probability p_" + std::to_string(k) + " is negative or not finite");
    }
    total += p[k];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "offspring probabilities sum to " << total << ", not 1";
    throw InvalidArgument(msg.str());
  }
  while (p.size() > 1 && p.back() == 0.0) p.pop_back();
  for (double& v : p) v /= total;

  OffspringDist d;
  d.p_ = std::move(p);
  const std::size_t n = d.p_.size();
  d.tails_.assign(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) d.tails_[k] = d.tails_[k + 1] + d.p_[k];
  d.tails_[0] = 1.0;

  d.cdf_.resize(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += d.p_[k];
    d.cdf_[k] = acc;
  }
  d.cdf_.back() = 1.0;

  double m = 0.0;
  double second = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    m += kk * d.p_[k];
    second += kk * kk * d.p_[k];
  }
  d.mean_ = m;
  d.variance_ = std::max(0.0, second - m * m);
  d.gamma_ = 2.0;
  d.c2_ = 0.5 * d.variance_;
  d.p0_ = d.p_[0];
  d.p1_ = n > 1 ? d.p_[1] : 0.0;
  return d;
}

OffspringDist OffspringDist::make_heavy_tail(double gamma, double kappa, double m_target) {
  if (!(gamma > 1.0 && gamma < 2.0)) throw InvalidArgument("heavy-tail gamma must lie in (1, 2)");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InvalidArgument("heavy-tail kappa must be positive");
  if (!(m_target > 0.0 && m_target <= 1.0)) throw InvalidArgument("heavy-tail mean must lie in (0, 1]");

  OffspringDist d;
  d.heavy_ = true;
  d.gamma_ = gamma;
  d.kappa_ = kappa;
  d.zeta_gamma_ = boost::math::zeta(gamma);

  // mean = T_1 + sum_{k >= 2} T_k = T_1 + kappa (zeta(gamma) - 1)
  const double t2 = kappa * std::pow(2.0, -gamma);
  const double t1 = m_target - kappa * (d.zeta_gamma_ - 1.0);
  const double p1 = t1 - t2;
  if (p1 < 0.0) {
    std::ostringstream msg;
    msg.precision(10);
    msg << "heavy-tail law infeasible: sum_{n>=2} n p_n = " << kappa * (t2 / kappa + d.zeta_gamma_ - 1.0)
        << " exceeds the target mean " << m_target << " (p_1 would be " << p1 << ")";
    throw InfeasibleDistribution(msg.str(), -p1);
  }
  const double p0 = 1.0 - t1;
  if (p0 < 0.0 || p0 > 1.0) {
    std::ostringstream msg;
    msg << "heavy-tail law infeasible: p_0 = " << p0 << " outside [0, 1]";
    throw InfeasibleDistribution(msg.str(), p0 < 0.0 ? -p0 : p0 - 1.0);
  }
  d.p0_ = p0;
  d.p1_ = p1;
  d.mean_ = m_target;
  d.variance_ = std::numeric_limits<double>::infinity();
  d.c2_ = std::tgamma(2.0 - gamma) * kappa / (gamma - 1.0);
  d.gamma_fn_one_minus_ = std::tgamma(1.0 - gamma);

  d.zeta_series_.resize(kZetaTerms + 1, 0.0);
  double factorial = 1.0;
  for (int j = 1; j <= kZetaTerms; ++j) {
    factorial *= j;
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    d.zeta_series_[j] = sign * boost::math::zeta(gamma - j) / factorial;
  }
  return d;
}

std::optional<double> OffspringDist::kappa() const {
  if (!heavy_) return std::nullopt;
  return kappa_;
}

bool OffspringDist::no_branching() const { return p1_ == 1.0; }

double OffspringDist::prob(std::uint64_t k) const {
  if (!heavy_) return k < p_.size() ? p_[k] : 0.0;
  if (k == 0) return p0_;
  if (k == 1) return p1_;
  const double kk = static_cast<double>(k);
  return kappa_ * (std::pow(kk, -gamma_) - std::pow(kk + 1.0, -gamma_));
}

double OffspringDist::tail_mass(std::uint64_t k) const {
  if (!heavy_) return k < tails_.size() ? tails_[k] : 0.0;
  if (k == 0) return 1.0;
  if (k == 1) return 1.0 - p0_;
  return kappa_ * std::pow(static_cast<double>(k), -gamma_);
}

double OffspringDist::heavy_sum(double b) const {
  if (std::isinf(b)) return zeta_gamma_ - 1.0;
  if (b >= kSeriesCrossover) {
    // zeta(gamma) - 1 - e^b sum_{k >= 2} k^{-gamma} e^{-b k}
    CompensatedSum s;
    for (int k = 2; k < 100000; ++k) {
      const double term = std::pow(static_cast<double>(k), -gamma_) * std::exp(-b * (k - 1));
      s.add(term);
      if (term < 1e-18 * s.value()) break;
    }
    return (zeta_gamma_ - 1.0) - s.value();
  }
  // full(b) = sum_{k >= 1} k^{-gamma} (1 - e^{-b k})
  //         = -Gamma(1 - gamma) b^{gamma - 1} - sum_{j >= 1} zeta(gamma - j) (-b)^j / j!
  CompensatedSum poly;
  double bj = 1.0;
  for (int j = 1; j <= kZetaTerms; ++j) {
    bj *= b;
    poly.add(zeta_series_[j] * bj);
  }
  const double full = -gamma_fn_one_minus_ * std::pow(b, gamma_ - 1.0) - poly.value();
  const double s1 = full + std::expm1(-b);
  const double s2 = zeta_gamma_ - full - std::exp(-b);
  return s1 - std::expm1(b) * s2;
}

double OffspringDist::f(double u) const {
  if (!(u > 0.0 && u <= 1.0)) throw InvalidArgument("f: u must lie in (0, 1]");
  if (heavy_) {
    const double b = -std::log1p(-u);
    return kappa_ * std::max(0.0, heavy_sum(b));
  }
  // q_k = 1 - (1 - u)^{k - 1} built up as q <- u + (1 - u) q. All terms are
  // nonnegative, so nothing cancels near u = 0 and no transcendental call is
  // needed (the integral-equation sweeps evaluate this ~1e8 times).
  const double v = 1.0 - u;
  double q = 0.0;
  double s = 0.0;
  for (std::size_t k = 2; k < tails_.size(); ++k) {
    q = u + v * q;
    s += tails_[k] * q;
  }
  return s;
}

double OffspringDist::big_g(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("G: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  return x * f(x);
}

double OffspringDist::f_sub(double u) const { return f(u); }

std::vector<double> OffspringDist::llogl_series(double c, int n_max) const {
  if (!(c > 0.0)) throw InvalidArgument("llogl_series: c must be positive");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(0, n_max)));
  CompensatedSum s;
  for (int n = 1; n <= n_max; ++n) {
    const double u = std::exp(-c * n);
    if (u > 0.0) s.add(f_sub(u));
    out.push_back(s.value());
  }
  return out;
}

double OffspringDist::generating_band(double eps) const {
  if (c2_ <= 0.0) return 0.0;
  // Scan from u = 1e-12 upwards on a log grid; the band ends at the first
  // violation.
  double last_ok = 0.0;
  for (int i = 0; i <= 240; ++i) {
    const double u = std::pow(10.0, -12.0 + 0.05 * i);
    const double r = big_g(u) / std::pow(u, gamma_) / c2_;
    if (r < 1.0 - eps || r > 1.0 + eps) break;
    last_ok = u;
  }
  return last_ok;
}

double OffspringDist::linear_band(double eps) const {
  double last_ok = 0.0;
  for (int i = 0; i <= 240; ++i) {
    const double u = std::pow(10.0, -12.0 + 0.05 * i);
    if (big_g(u) > eps * u) break;
    last_ok = u;
  }
  return last_ok;
}

std::uint64_t OffspringDist::quantile(double u) const {
  if (!heavy_) {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto k = static_cast<std::uint64_t>(it - cdf_.begin());
    return std::min<std::uint64_t>(k, cdf_.size() - 1);
  }
  if (u < p0_) return 0;
  if (u < p0_ + p1_) return 1;
  // P(K >= k) = kappa k^{-gamma} for k >= 2; invert on v = 1 - u in (0, T_2].
  const double v = 1.0 - u;
  const double k = std::floor(std::pow(kappa_ / v, 1.0 / gamma_));
  if (!(k < kMaxDraw)) return static_cast<std::uint64_t>(kMaxDraw);
  return std::max<std::uint64_t>(2, static_cast<std::uint64_t>(k));
}

}  // namespace bsp
