#include "bsp/fk_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "bsp/errors.hpp"
#include "bsp/stats.hpp"

namespace bsp {

namespace {

// Weights beyond e^{-40} are dropped; they are below double resolution of any
// sum they enter.
constexpr double kMaxExponent = 40.0;

enum class DualEnd { Crossed, Escaped, Budget, Stopped };

struct DualResult {
  DualEnd end;
  double z;
};

void require_spectrally_negative(const StableParams& motion, const char* who) {
  if (!motion.spectrally_negative() || motion.degenerate() || !motion.c1_alpha) {
    throw InvalidArgument(std::string(who) + ": needs a nondegenerate spectrally negative motion (c_plus = 0)");
  }
}

class DualWalker {
 public:
  DualWalker(const StableParams& motion, const DualPathSettings& cfg) : sampler_(motion), motion_(motion), cfg_(cfg) {
    if (!(cfg.step > 0.0) || !(cfg.rel_scale > 0.0) || cfg.max_steps == 0) {
      throw InvalidArgument("dual path settings: step, rel_scale and max_steps must be positive");
    }
  }

  // Walks -xi from `start` until it drops to `barrier`, rises above `ceiling`,
  // runs out of steps, or `visit(from, to, dt)` returns false. The crossing
  // step is cut at the barrier by linear interpolation, which is exact up to
  // the within-step path shape since -xi only creeps downward.
  template <typename Visit>
  DualResult walk(double start, double barrier, double ceiling, RngStream& rng, Visit&& visit) const {
    double z = start;
    for (std::uint64_t k = 0; k < cfg_.max_steps; ++k) {
      const double gap = z - barrier;
      const double dt = step_for(gap);
      const double next = z - sampler_.time_scale(dt) * sampler_.unit(rng);
      if (next <= barrier) {
        visit(z, barrier, dt * gap / (z - next));
        return {DualEnd::Crossed, barrier};
      }
      if (!visit(z, next, dt)) return {DualEnd::Stopped, next};
      z = next;
      if (z > ceiling) return {DualEnd::Escaped, z};
    }
    return {DualEnd::Budget, z};
  }

 private:
  double step_for(double gap) const {
    const double target = cfg_.rel_scale * gap;
    double dt = std::numeric_limits<double>::infinity();
    if (motion_.c_star > 0.0) dt = std::pow(target, motion_.alpha) / motion_.c_star;
    if (motion_.alpha == 1.0 && motion_.eta != 0.0) dt = std::min(dt, target / std::abs(motion_.eta));
    return std::max(cfg_.step, dt);
  }

  StableSampler sampler_;
  StableParams motion_;
  DualPathSettings cfg_;
};

// Occupation of one path ensemble on the phi grid: for path p, entries
// [offset[p], offset[p + 1]) hold (node, time weight) with
// int phi^{gamma-1}(path) ds ~ sum weight * phi^{gamma-1}(node).
struct Occupation {
  std::vector<std::uint32_t> offset{0};
  std::vector<std::uint16_t> node;
  std::vector<float> weight;
  std::vector<double> exit_z;  ///< where the path stopped; <= 0 once crossed
  std::uint64_t escaped = 0;
  std::uint64_t budget = 0;

  void append(Occupation&& o) {
    const std::uint32_t base = offset.back();
    for (std::size_t i = 1; i < o.offset.size(); ++i) offset.push_back(base + o.offset[i]);
    node.insert(node.end(), o.node.begin(), o.node.end());
    weight.insert(weight.end(), o.weight.begin(), o.weight.end());
    exit_z.insert(exit_z.end(), o.exit_z.begin(), o.exit_z.end());
    escaped += o.escaped;
    budget += o.budget;
  }
};

class HatAccumulator {
 public:
  explicit HatAccumulator(const std::vector<double>& ys) : ys_(ys), dense_(ys.size(), 0.0) {}

  // Adds `w` at position z, split between the two neighbouring nodes.
  void add(double z, double w) {
    const std::size_t n = ys_.size();
    if (z <= 0.0) {
      bump(0, w);
      return;
    }
    if (z >= ys_[n - 1]) {
      bump(n - 1, w);
      return;
    }
    const auto k = static_cast<std::size_t>(std::upper_bound(ys_.begin(), ys_.end(), z) - ys_.begin()) - 1;
    const double t = (z - ys_[k]) / (ys_[k + 1] - ys_[k]);
    bump(k, (1.0 - t) * w);
    bump(k + 1, t * w);
  }

  void flush(Occupation& out) {
    std::sort(touched_.begin(), touched_.end());
    for (const std::size_t k : touched_) {
      out.node.push_back(static_cast<std::uint16_t>(k));
      out.weight.push_back(static_cast<float>(dense_[k]));
      dense_[k] = 0.0;
    }
    touched_.clear();
    out.offset.push_back(static_cast<std::uint32_t>(out.node.size()));
  }

 private:
  void bump(std::size_t k, double w) {
    if (dense_[k] == 0.0) touched_.push_back(k);
    dense_[k] += w;
    if (dense_[k] == 0.0) dense_[k] = std::numeric_limits<double>::min();
  }

  const std::vector<double>& ys_;
  std::vector<double> dense_;
  std::vector<std::size_t> touched_;
};

TailCurve phi_curve(const std::vector<double>& ys, const std::vector<double>& phi, double& rate) {
  // Exponential continuation fitted on the last quarter of the grid.
  const std::size_t n = ys.size();
  const std::size_t k = n - 1 - std::max<std::size_t>(1, (n - 1) / 4);
  rate = 0.0;
  if (phi[k] > 0.0 && phi[n - 1] > 0.0) rate = std::max(0.0, -std::log(phi[n - 1] / phi[k]) / (ys[n - 1] - ys[k]));
  return TailCurve(ys, phi, {TailKind::Exponential, rate});
}

bool phi_invariants(const std::vector<double>& phi) {
  if (phi.empty() || phi[0] != 1.0) return false;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (!(phi[i] > 0.0 && phi[i] <= 1.0)) return false;
    if (i > 0 && phi[i] > phi[i - 1]) return false;
  }
  return true;
}

}  // namespace

double phi_grid_extent(const StableParams& motion, const OffspringDist& dist, double level) {
  require_spectrally_negative(motion, "phi_grid_extent");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("phi_grid_extent: level must lie in (0, 1)");
  const double rate = std::pow(dist.c2() / *motion.c1_alpha, 1.0 / motion.alpha);
  return -std::log(level) / rate;
}

PhiGrid picard_phi(const StableParams& motion, const OffspringDist& dist, const std::vector<double>& y_grid,
                   const PhiSettings& settings, const RunSettings& run) {
  require_spectrally_negative(motion, "picard_phi");
  if (!dist.critical() || !(dist.c2() > 0.0)) throw InvalidArgument("picard_phi: needs a critical law with C2 > 0");
  if (y_grid.size() < 3 || y_grid.front() != 0.0) throw InvalidArgument("picard_phi: grid must start at 0 with >= 3 points");
  if (y_grid.size() > std::numeric_limits<std::uint16_t>::max()) throw InvalidArgument("picard_phi: grid too large");
  for (std::size_t i = 1; i < y_grid.size(); ++i) {
    if (!(y_grid[i] > y_grid[i - 1])) throw InvalidArgument("picard_phi: grid must be strictly ascending");
  }
  if (settings.n_paths == 0) throw InvalidArgument("picard_phi: n_paths must be positive");
  if (!(settings.damping > 0.0 && settings.damping <= 1.0)) throw InvalidArgument("picard_phi: damping must lie in (0, 1]");
  if (run.block == 0) throw InvalidArgument("picard_phi: block size must be positive");

  const std::size_t g = y_grid.size();
  const double gamma = dist.gamma();
  const double c2 = dist.c2();
  const double y_max = y_grid.back();
  const DualWalker walker(motion, settings.path);

  // One fixed ensemble of n_paths dual paths from every grid point y > 0;
  // every sweep reweights the same paths.
  const std::size_t blocks = block_count(settings.n_paths, run.block);
  auto task = [&](std::size_t t) {
    const std::size_t start = 1 + t / blocks;
    const std::size_t b = t % blocks;
    const std::size_t count = std::min(run.block, settings.n_paths - b * run.block);
    RngStream rng(run.seed, StreamPurpose::kPhiPaths, t);
    Occupation occ;
    HatAccumulator hat(y_grid);
    for (std::size_t p = 0; p < count; ++p) {
      const DualResult r = walker.walk(y_grid[start], 0.0, y_max, rng, [&](double from, double to, double dt) {
        hat.add(from, 0.5 * dt);
        hat.add(to, 0.5 * dt);
        return true;
      });
      hat.flush(occ);
      occ.exit_z.push_back(r.z);
      occ.escaped += r.end == DualEnd::Escaped;
      occ.budget += r.end == DualEnd::Budget;
    }
    return occ;
  };
  auto merge = [](Occupation& into, Occupation&& part) { into.append(std::move(part)); };
  const Occupation occ = run_tasks((g - 1) * blocks, run.workers, task, merge, Occupation{});

  PhiGrid out;
  out.ys = y_grid;
  out.gamma = gamma;
  out.c2 = c2;
  out.paths_escaped = occ.escaped;
  out.paths_budget = occ.budget;

  std::vector<double> phi(g, 1.0);
  if (settings.start == PhiStart::Envelope) {
    const double rate = std::pow(c2 / *motion.c1_alpha, 1.0 / motion.alpha);
    for (std::size_t i = 0; i < g; ++i) phi[i] = std::exp(-rate * y_grid[i]);
  }

  std::vector<double> next(g);
  std::vector<double> se(g, 0.0);
  std::vector<double> gpow(g);
  const std::size_t n = settings.n_paths;
  for (int it = 0;; ++it) {
    double rate = 0.0;
    const TailCurve curve = phi_curve(y_grid, phi, rate);
    for (std::size_t i = 0; i < g; ++i) gpow[i] = std::pow(phi[i], gamma - 1.0);
    next[0] = 1.0;
    for (std::size_t i = 1; i < g; ++i) {
      MomentAccumulator acc;
      for (std::size_t p = (i - 1) * n; p < i * n; ++p) {
        double e = 0.0;
        for (std::uint32_t q = occ.offset[p]; q < occ.offset[p + 1]; ++q) e += occ.weight[q] * gpow[occ.node[q]];
        e *= c2;
        // Past the path's last point the remaining factor is phi itself at
        // that point (strong Markov property); phi = 1 at or below 0.
        acc.add(e > kMaxExponent ? 0.0 : std::exp(-e) * curve(occ.exit_z[p]));
      }
      next[i] = acc.mean();
      se[i] = acc.standard_error();
    }
    // Monte Carlo noise can leave T(phi) slightly non-monotone. The iteration
    // runs on its nonincreasing envelope, so convergence is measured there.
    for (std::size_t i = 1; i < g; ++i) {
      next[i] = std::min(next[i - 1], std::max(next[i], std::numeric_limits<double>::min()));
    }
    double change = 0.0;
    for (std::size_t i = 0; i < g; ++i) change = std::max(change, std::abs(next[i] - phi[i]));
    out.history.push_back(change);
    out.iterations = it;
    out.tail_rate = rate;
    if (change < settings.tol) {
      out.converged = true;
      break;
    }
    if (it == settings.max_iter) break;
    for (std::size_t i = 1; i < g; ++i) phi[i] = (1.0 - settings.damping) * phi[i] + settings.damping * next[i];
    if (!phi_invariants(phi)) out.invariants_held = false;
  }
  out.phi = phi;
  out.stderr_phi = se;
  if (!phi_invariants(out.phi)) out.invariants_held = false;
  return out;
}

EnvelopeCheck check_envelope(const PhiGrid& phi, const StableParams& motion, std::size_t n_paths,
                             const DualPathSettings& path, const RunSettings& run) {
  require_spectrally_negative(motion, "check_envelope");
  if (phi.ys.size() < 2 || phi.ys.size() != phi.phi.size()) throw InvalidArgument("check_envelope: malformed phi grid");
  if (n_paths == 0) throw InvalidArgument("check_envelope: n_paths must be positive");

  EnvelopeCheck out;
  for (double v : phi.phi) out.c = std::max(out.c, phi.c2 * std::pow(v, phi.gamma - 1.0));
  const DualWalker walker(motion, path);
  const double alpha = motion.alpha;

  // E_1 exp(-c dy^alpha tau_0) = E_dy exp(-c tau_0) by self-similarity; the
  // second form keeps the skeleton resolution the same as for phi itself.
  // Every distinct spacing gets its own block of streams.
  std::map<double, double> cache;
  std::uint64_t stream_base = std::uint64_t{1} << 36;
  auto factor_for = [&](double dy) {
    if (auto it = cache.find(dy); it != cache.end()) return it->second;
    const std::size_t blocks = block_count(n_paths, run.block);
    auto task = [&](std::size_t t) {
      RngStream rng(run.seed, StreamPurpose::kPhiPaths, stream_base + t);
      const std::size_t count = std::min(run.block, n_paths - t * run.block);
      MomentAccumulator acc;
      for (std::size_t p = 0; p < count; ++p) {
        double time = 0.0;
        const DualResult r = walker.walk(dy, 0.0, std::numeric_limits<double>::infinity(), rng,
                                         [&](double, double, double dt) {
                                           time += dt;
                                           return out.c * time <= kMaxExponent;
                                         });
        acc.add(r.end == DualEnd::Crossed ? std::exp(-out.c * time) : 0.0);
      }
      return acc;
    };
    auto merge = [](MomentAccumulator& into, MomentAccumulator&& part) { into.merge(part); };
    const double v = run_tasks(blocks, run.workers, task, merge, MomentAccumulator{}).mean();
    stream_base += blocks;
    cache.emplace(dy, v);
    return v;
  };

  out.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < phi.ys.size(); ++i) {
    const double dy = phi.ys[i + 1] - phi.ys[i];
    const double f = factor_for(dy);
    out.factor.push_back(f);
    out.factor_exact.push_back(first_passage_laplace(motion, out.c * std::pow(dy, alpha) , 1.0));
    const double margin = phi.phi[i + 1] - phi.phi[i] * f;
    out.worst_margin = std::min(out.worst_margin, margin);
    if (margin < 0.0) ++out.violations;
  }
  return out;
}

FkCheck check_fk_identity(const StableParams& motion, const OffspringDist& dist, const TailCurve& u, double x,
                          double y, std::size_t n_paths, const DualPathSettings& path, const RunSettings& run) {
  require_spectrally_negative(motion, "check_fk_identity");
  if (!(y >= 0.0 && x >= y)) throw InvalidArgument("check_fk_identity: need 0 <= y <= x");
  if (n_paths == 0) throw InvalidArgument("check_fk_identity: n_paths must be positive");
  if (dist.mean() > 1.0 + 1e-12) throw InvalidArgument("check_fk_identity: supercritical offspring law");

  FkCheck out;
  out.x = x;
  out.y = y;
  out.u_x = u(x);
  out.u_y = u(y);
  if (!(out.u_y > 0.0)) throw InsufficientData("check_fk_identity: u(y) is zero, below statistical resolution");
  const double kill = std::max(0.0, 1.0 - dist.mean());
  if (dist.subcritical()) {
    const double a0 = std::pow(kill / *motion.c1_alpha, 1.0 / motion.alpha);
    out.first_passage_bound = std::exp(-a0 * (x - y)) * out.u_y;
  }
  if (x == y) {
    out.rhs = out.u_y;
    return out;
  }

  // Killing rate along the path: (1 - m) + f(u), f(v) = G(v) / v.
  auto potential = [&](double z) {
    const double v = std::clamp(u(z), 0.0, 1.0);
    return kill + (v > 0.0 ? dist.f(v) : 0.0);
  };
  const DualWalker walker(motion, path);
  struct Acc {
    MomentAccumulator w;
    std::uint64_t budget = 0;
  };
  const std::size_t blocks = block_count(n_paths, run.block);
  auto task = [&](std::size_t t) {
    RngStream rng(run.seed, StreamPurpose::kFkPaths, t);
    const std::size_t count = std::min(run.block, n_paths - t * run.block);
    Acc acc;
    for (std::size_t p = 0; p < count; ++p) {
      double e = 0.0;
      double prev = potential(x);
      const DualResult r = walker.walk(x, y, std::numeric_limits<double>::infinity(), rng,
                                       [&](double, double to, double dt) {
                                         const double cur = potential(to);
                                         e += 0.5 * dt * (prev + cur);
                                         prev = cur;
                                         return e <= kMaxExponent;
                                       });
      double w = 0.0;
      if (r.end == DualEnd::Crossed) {
        w = std::exp(-e);
      } else if (r.end == DualEnd::Budget) {
        // Remaining factor from the current point is u(z) / u(y) by the
        // identity itself.
        w = std::exp(-e) * u(r.z) / out.u_y;
        ++acc.budget;
      }
      acc.w.add(w);
    }
    return acc;
  };
  auto merge = [](Acc& into, Acc&& part) {
    into.w.merge(part.w);
    into.budget += part.budget;
  };
  const Acc total = run_tasks(blocks, run.workers, task, merge, Acc{});
  out.paths = n_paths;
  out.paths_budget = total.budget;
  out.rhs = out.u_y * total.w.mean();
  out.rhs_stderr = out.u_y * total.w.standard_error();
  out.rel_error = out.u_x > 0.0 ? std::abs(out.rhs - out.u_x) / out.u_x : std::numeric_limits<double>::infinity();
  return out;
}

PlateauEstimate estimate_plateau_constant(const TailEstimate& est, IndexWindow window, TailKind kind,
                                          double exponent_or_rate) {
  if (kind == TailKind::None) throw InvalidArgument("plateau: no tail kind");
  if (window.end > est.size() || window.begin > window.end) throw InvalidArgument("plateau: window outside grid");
  PlateauEstimate out;
  MomentAccumulator m;
  for (std::size_t i = window.begin; i < window.end; ++i) {
    if (!(est.u_hat[i] > 0.0)) continue;
    const double x = est.xs[i];
    const double scale = kind == TailKind::Power ? std::pow(x, exponent_or_rate) : std::exp(exponent_or_rate * x);
    out.xs.push_back(x);
    out.values.push_back(scale * est.u_hat[i]);
    m.add(out.values.back());
  }
  if (out.values.empty()) throw InsufficientData("plateau: empty window");
  out.constant = m.mean();
  out.cv = out.values.size() > 1 ? std::sqrt(m.variance()) / m.mean() : 0.0;
  out.nonincreasing = std::is_sorted(out.values.rbegin(), out.values.rend());
  return out;
}

}  // namespace bsp
