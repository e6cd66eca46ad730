#pragma once

// Monte Carlo estimate of u(x) = P(M >= x) on a fixed grid.
//
// Counts are kept per grid point so that estimates from different workers
// merge exactly. Each tree contributes one index into a histogram (the number
// of grid points at or below its maximum), which makes the hit counts
// nonincreasing along the grid by construction.
//
// A truncated tree whose observed maximum lies below x is "open" at x: it may
// or may not have reached x had it been simulated to the end. Counting open
// trees as misses gives the pessimistic estimate, as hits the optimistic one.

#include <cstdint>
#include <vector>

#include "bsp/stats.hpp"

namespace bsp {

struct TailEstimate {
  std::vector<double> xs;
  std::vector<double> u_hat;         ///< pessimistic estimate (open trees are misses)
  std::vector<double> u_optimistic;  ///< open trees counted as hits
  std::vector<double> ci_low;        ///< Wilson low of the pessimistic count
  std::vector<double> ci_high;       ///< Wilson high of the optimistic count
  std::vector<std::uint64_t> hits;
  std::vector<std::uint64_t> open;
  std::uint64_t n = 0;
  std::uint64_t truncated = 0;

  std::size_t size() const { return xs.size(); }
  double bracket(std::size_t i) const { return u_optimistic[i] - u_hat[i]; }
  double ci_halfwidth(std::size_t i) const { return 0.5 * (ci_high[i] - ci_low[i]); }

  /// Exact curve with a relative confidence half-width, for tests and for
  /// wrapping deterministic solutions.
  static TailEstimate from_curve(std::vector<double> xs, std::vector<double> u, double rel_halfwidth = 0.01);
};

/// Mergeable per-tree hit histogram.
class TailCounter {
 public:
  TailCounter() = default;
  explicit TailCounter(std::vector<double> xs);

  /// Records one tree with observed maximum `m`.
  void add(double m, bool truncated);
  void merge(const TailCounter& other);
  std::uint64_t n() const { return n_; }
  const std::vector<double>& xs() const { return xs_; }

  TailEstimate finalize(double z = kZ95) const;

 private:
  std::vector<double> xs_;
  std::vector<std::uint64_t> level_;            // level_[k]: trees whose max reaches exactly k grid points
  std::vector<std::uint64_t> truncated_level_;  // same, restricted to truncated trees
  std::uint64_t n_ = 0;
  std::uint64_t truncated_ = 0;
};

}  // namespace bsp
