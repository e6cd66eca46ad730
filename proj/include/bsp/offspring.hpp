#pragma once

// Offspring laws and their generating-function functionals.
//
// Two families are supported:
//   * an explicit finite vector (p_0, ..., p_K), which always has finite
//     variance (gamma = 2, C2 = sigma^2 / 2);
//   * a heavy-tail family with tail sums T_n = sum_{k >= n} p_k = kappa n^{-gamma}
//     exactly for n >= 2, p_0 and p_1 solved from the target mean.
//
// G(x) = sum_k p_k (1 - x)^k - 1 + m x is evaluated through the tail sums,
//     G(x) = x * sum_{k >= 2} T_k (1 - (1 - x)^{k - 1}),
// a sum of nonnegative terms, so it stays accurate down to x ~ 1e-300
// without an asymptotic switch.

#include <cstdint>
#include <optional>
#include <vector>

#include "bsp/rng.hpp"

namespace bsp {

class OffspringDist {
 public:
  /// Finite probability vector. Throws InvalidArgument on negative entries or
  /// a total mass off by more than 1e-9.
  static OffspringDist make_explicit(std::vector<double> p);

  /// Heavy-tail family with T_n = kappa n^{-gamma} (n >= 2) and mean m_target.
  /// Throws InfeasibleDistribution when p_1 or p_0 would leave [0, 1].
  static OffspringDist make_heavy_tail(double gamma, double kappa, double m_target);

  bool is_heavy_tail() const { return heavy_; }
  double mean() const { return mean_; }
  /// +inf for the heavy-tail family.
  double variance() const { return variance_; }
  double gamma() const { return gamma_; }
  /// kappa_gamma; only for the heavy-tail family.
  std::optional<double> kappa() const;
  /// C2(gamma): Gamma(2 - gamma) kappa / (gamma - 1), or sigma^2 / 2 for gamma = 2.
  double c2() const { return c2_; }
  /// sum k log k p_k < inf.
  bool llogl() const { return true; }
  /// p_1 = 1: every particle has exactly one child, G vanishes identically.
  bool no_branching() const;
  bool subcritical() const { return mean_ < 1.0 - 1e-12; }
  bool critical() const { return !subcritical(); }

  double prob(std::uint64_t k) const;
  /// T_k = sum_{j >= k} p_j.
  double tail_mass(std::uint64_t k) const;
  /// Explicit probability vector (empty for the heavy-tail family).
  const std::vector<double>& probabilities() const { return p_; }

  /// G(x), x in [0, 1].
  double big_g(double x) const;
  /// f(u) = G(u) / u, u in (0, 1].
  double f(double u) const;
  /// Nonlinear part of the subcritical Feynman-Kac potential; equals G(u) / u.
  double f_sub(double u) const;

  /// Partial sums of sum_{n >= 1} f_sub(e^{-c n}), n = 1..n_max.
  std::vector<double> llogl_series(double c, int n_max) const;

  /// Largest u on a log grid such that G(v)/v^gamma lies in [C2(1-eps), C2(1+eps)]
  /// for every grid v <= u. Returns 0 when no such point exists above 1e-12.
  double generating_band(double eps) const;
  /// Largest u on a log grid with G(v) <= eps v for all grid v <= u.
  double linear_band(double eps) const;

  std::uint64_t sample(RngStream& rng) const { return quantile(rng.uniform()); }
  /// Smallest k with P(K <= k) > u, for u in [0, 1).
  std::uint64_t quantile(double u) const;

 private:
  OffspringDist() = default;
  double heavy_sum(double b) const;  // sum_{k >= 2} k^{-gamma} (1 - e^{-b (k-1)})

  bool heavy_ = false;
  std::vector<double> p_;
  std::vector<double> tails_;  // tails_[k] = T_k for k <= K + 1
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double variance_ = 0.0;
  double gamma_ = 2.0;
  double kappa_ = 0.0;
  double c2_ = 0.0;
  double p0_ = 0.0;
  double p1_ = 0.0;
  double zeta_gamma_ = 0.0;
  double gamma_fn_one_minus_ = 0.0;           // Gamma(1 - gamma)
  std::vector<double> zeta_series_;           // zeta(gamma - j) / j!, j >= 1
};

}  // namespace bsp
