#include "bsp/integral_equation.hpp"

#include <algorithm>
#include <cmath>

#include "bsp/errors.hpp"
#include "bsp/parallel.hpp"

namespace bsp {

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw InvalidArgument("integral equation: grid needs at least 2 points");
  if (grid.front() != 0.0) throw InvalidArgument("integral equation: grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InvalidArgument("integral equation: grid must be strictly ascending");
  }
}

// P(S >= x) + (1/n) sum_{S < x} [m v - G(v)], v = u(x - xi). Pairs are visited
// by descending xi so the arguments x - xi ascend and the curve lookup walks
// forward instead of searching.
double apply_at(const PairKernel& kernel, const OffspringDist& dist, const TailCurve& curve, double x) {
  const auto& xi = kernel.xi();
  const auto& s = kernel.s();
  const double m = dist.mean();
  std::size_t hint = 0;
  double acc = 0.0;
  std::size_t below = 0;
  for (const std::uint32_t j : kernel.by_xi_desc()) {
    if (s[j] >= x) continue;
    ++below;
    const double v = std::clamp(curve.walk(x - xi[j], hint), 0.0, 1.0);
    acc += m * v - dist.big_g(v);
  }
  const double n = static_cast<double>(kernel.n());
  return static_cast<double>(kernel.n() - below) / n + acc / n;
}

}  // namespace

std::vector<double> apply_operator(const PairKernel& kernel, const OffspringDist& dist, const TailCurve& curve,
                                   const std::vector<double>& grid, unsigned workers) {
  using Values = std::vector<double>;
  auto task = [&](std::size_t i) { return Values{apply_at(kernel, dist, curve, grid[i])}; };
  auto merge = [](Values& into, Values&& part) { into.push_back(part.front()); };
  Values init;
  init.reserve(grid.size());
  return run_tasks(grid.size(), workers, task, merge, std::move(init));
}

double residual(const PairKernel& kernel, const OffspringDist& dist, const std::vector<double>& u_grid,
                const std::vector<double>& grid, TailShape right_tail, unsigned workers) {
  check_grid(grid);
  if (u_grid.size() != grid.size()) throw InvalidArgument("residual: u and grid sizes differ");
  const TailCurve curve(grid, u_grid, right_tail);
  const std::vector<double> tu = apply_operator(kernel, dist, curve, grid, workers);
  double r = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) r = std::max(r, std::abs(u_grid[i] - tu[i]));
  return r;
}

SolveReport solve_u(const PairKernel& kernel, const OffspringDist& dist, const std::vector<double>& grid,
                    const SolveSettings& settings) {
  check_grid(grid);
  if (dist.mean() > 1.0 + 1e-12) throw InvalidArgument("solve_u: supercritical offspring law");
  if (!(settings.damping > 0.0 && settings.damping <= 1.0)) throw InvalidArgument("solve_u: damping must lie in (0, 1]");
  if (!(settings.tol > 0.0)) throw InvalidArgument("solve_u: tol must be positive");
  if (settings.max_iter < 1) throw InvalidArgument("solve_u: max_iter must be >= 1");

  std::vector<double> u = settings.initial;
  if (u.empty()) {
    const double scale = dist.subcritical() ? 1.0 / (1.0 - dist.mean()) : 1.0;
    u.reserve(grid.size());
    for (double x : grid) u.push_back(std::min(1.0, scale * kernel.tail_probability(x)));
  }
  if (u.size() != grid.size()) throw InvalidArgument("solve_u: initial iterate has the wrong size");
  u[0] = 1.0;

  SolveReport rep;
  rep.xs = grid;
  const double d = settings.damping;
  for (int it = 0;; ++it) {
    const TailCurve curve(grid, u, settings.right_tail);
    const std::vector<double> tu = apply_operator(kernel, dist, curve, grid, settings.workers);
    double r = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) r = std::max(r, std::abs(u[i] - tu[i]));
    rep.history.push_back(r);
    rep.residual_sup = r;
    rep.iterations = it;
    if (r < settings.tol) {
      rep.converged = true;
      break;
    }
    if (it == settings.max_iter) break;
    double running = 1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      running = std::min(running, std::clamp((1.0 - d) * u[i] + d * tu[i], 0.0, 1.0));
      u[i] = running;
    }
  }
  rep.u = std::move(u);
  return rep;
}

}  // namespace bsp
