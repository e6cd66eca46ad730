#pragma once

// Fixed point of the one-step decomposition of u(x) = P(M >= x) at the first
// branching time:
//
//   u(x) = P(S_e >= x) + E[1{S_e < x} (m u(x - xi_e) - G(u(x - xi_e)))]
//
// with the joint law of (xi_e, S_e) replaced by an empirical PairKernel.
// Because the kernel is itself a probability law on valid pairs, the exact
// fixed point is the tail of M for a branching process driven by that law,
// so it is directly comparable with tree simulations on the same skeleton
// step.

#include <vector>

#include "bsp/offspring.hpp"
#include "bsp/pair_kernel.hpp"
#include "bsp/tail_curve.hpp"

namespace bsp {

struct SolveSettings {
  double damping = 0.5;
  double tol = 1e-6;
  int max_iter = 2000;
  unsigned workers = 1;
  /// Continuation of u beyond the grid, re-matched to the last grid value
  /// every sweep.
  TailShape right_tail;
  /// Starting iterate on the grid; empty means P(S_e >= x) / (1 - m) capped
  /// at 1 (or P(S_e >= x) for a critical law).
  std::vector<double> initial;
};

struct SolveReport {
  std::vector<double> xs;
  std::vector<double> u;
  double residual_sup = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Sup-residual after each sweep.
  std::vector<double> history;
};

/// T(u) at every grid point, where u is continued by `curve`.
std::vector<double> apply_operator(const PairKernel& kernel, const OffspringDist& dist, const TailCurve& curve,
                                   const std::vector<double>& grid, unsigned workers = 1);

/// sup over the grid of |u - T(u)|, with u continued beyond the grid by
/// `right_tail`.
double residual(const PairKernel& kernel, const OffspringDist& dist, const std::vector<double>& u_grid,
                const std::vector<double>& grid, TailShape right_tail = {}, unsigned workers = 1);

/// Damped iteration u <- (1 - d) u + d T(u), clamped to [0, 1] and made
/// nonincreasing after every sweep, until sup |u - T(u)| < tol. The grid must
/// start at 0 and be strictly ascending. Rejects m > 1.
SolveReport solve_u(const PairKernel& kernel, const OffspringDist& dist, const std::vector<double>& grid,
                    const SolveSettings& settings);

}  // namespace bsp
