#pragma once

// Empirical joint law of (xi_e, S_e): the displacement and the running
// maximum of the motion over one Exp(1) lifetime, measured on the skeleton.
// It replaces the exact law as a quadrature kernel in the one-step
// decomposition of u.

#include <cstdint>
#include <utility>
#include <vector>

#include "bsp/parallel.hpp"
#include "bsp/stable_motion.hpp"

namespace bsp {

class PairKernel {
 public:
  /// Validates s >= max(0, xi) for every pair.
  PairKernel(std::vector<std::pair<double, double>> pairs, double step);

  std::size_t n() const { return xi_.size(); }
  double step() const { return step_; }

  /// Pairs sorted by S ascending.
  const std::vector<double>& xi() const { return xi_; }
  const std::vector<double>& s() const { return s_; }
  /// Indices into xi()/s() ordered by xi descending, i.e. by ascending
  /// argument x - xi for a fixed x.
  const std::vector<std::uint32_t>& by_xi_desc() const { return by_xi_desc_; }

  /// Number of pairs with S < x.
  std::size_t count_below(double x) const;
  /// Empirical P(S_e >= x).
  double tail_probability(double x) const;

 private:
  std::vector<double> xi_;
  std::vector<double> s_;
  std::vector<std::uint32_t> by_xi_desc_;
  double step_ = 0.0;
};

/// n independent draws of (xi_e, S_e) on a skeleton with the given step.
/// Requires n >= 10^4.
PairKernel build_kernel(const StableParams& motion, double step, std::size_t n, const RunSettings& run);

}  // namespace bsp
