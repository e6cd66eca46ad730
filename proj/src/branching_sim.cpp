#include "bsp/branching_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bsp/errors.hpp"
#include "bsp/parallel.hpp"

namespace bsp {

namespace {

struct Particle {
  double birth;
  double pos;
};

struct TailTask {
  TailCounter fine;
  TailCounter coarse;
  MomentAccumulator particles;
  std::uint64_t stopped = 0;
};

void check_not_supercritical(const OffspringDist& dist) {
  if (dist.mean() > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "supercritical offspring law (m = " << dist.mean() << "): the process survives with positive probability";
    throw InvalidArgument(msg.str());
  }
}

}  // namespace

void SimConfig::validate() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("sim step must be positive");
  if (max_particles < 1) throw InvalidArgument("max_particles must be >= 1");
  if (!(max_time > 0.0)) throw InvalidArgument("max_time must be positive");
  if (!std::is_sorted(record_population_at.begin(), record_population_at.end())) {
    throw InvalidArgument("record_population_at must be ascending");
  }
}

TreeOutcome simulate_tree(const StableSampler& motion, const OffspringDist& dist, const SimConfig& config,
                          RngStream& rng) {
  TreeOutcome out;
  const auto& ts = config.record_population_at;
  std::vector<std::int64_t> diff(ts.size() + 1, 0);

  std::vector<Particle> queue;
  queue.push_back({0.0, 0.0});
  std::uint64_t total = 1;
  double mx = 0.0;
  double cmx = 0.0;
  double last_death = 0.0;

  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Particle p = queue[head];
    const double life = rng.exponential();
    const double death = p.birth + life;
    const bool cut = death > config.max_time;
    const double duration = cut ? config.max_time - p.birth : life;

    const SegmentWalk w = walk_segment(motion, p.pos, duration, config.step, rng, config.coupled_coarse);
    mx = std::max(mx, w.max);
    cmx = std::max(cmx, w.coarse_max);
    last_death = std::max(last_death, death);

    if (!ts.empty()) {
      const auto i0 = std::lower_bound(ts.begin(), ts.end(), p.birth) - ts.begin();
      const auto i1 = std::lower_bound(ts.begin(), ts.end(), death) - ts.begin();
      ++diff[i0];
      --diff[i1];
    }
    if (config.keep_log) out.lifespans.emplace_back(p.birth, death);

    if (config.stop_level && (config.coupled_coarse ? cmx : mx) >= *config.stop_level) {
      out.stopped = true;
      break;
    }
    if (cut) {
      out.truncated = true;
      continue;
    }
    const std::uint64_t k = dist.sample(rng);
    if (k == 0) continue;
    if (k > config.max_particles - total) {
      out.truncated = true;
      break;
    }
    total += k;
    queue.insert(queue.end(), k, Particle{death, w.end});
  }

  out.m_skeleton = mx;
  out.m_coarse = config.coupled_coarse ? cmx : mx;
  out.total_particles = total;
  out.extinct = !out.truncated && !out.stopped;
  out.extinction_time = out.extinct ? last_death : 0.0;
  out.alive_at.resize(ts.size());
  std::int64_t run = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    run += diff[i];
    out.alive_at[i] = static_cast<std::uint64_t>(run);
  }
  return out;
}

TreeOutcome simulate_tree(const StableParams& motion, const OffspringDist& dist, const SimConfig& config,
                          RngStream& rng) {
  config.validate();
  return simulate_tree(StableSampler(motion), dist, config, rng);
}

double default_max_time(const StableParams& motion, const OffspringDist& dist, double x_max) {
  if (dist.subcritical()) return std::numeric_limits<double>::infinity();
  const double g = dist.gamma();
  return 4.0 * std::pow(std::max(x_max, 1.0), motion.alpha * (1.0 - 1.0 / g));
}

TailRun estimate_tail(const StableParams& motion, const OffspringDist& dist, const std::vector<double>& x_grid,
                      std::uint64_t n_reps, const SimConfig& config, const RunSettings& run) {
  check_not_supercritical(dist);
  config.validate();
  if (x_grid.empty()) throw InvalidArgument("estimate_tail: empty x grid");
  if (n_reps == 0) throw InvalidArgument("estimate_tail: n_reps must be positive");
  if (run.block == 0) throw InvalidArgument("estimate_tail: block size must be positive");

  TailRun result;
  SimConfig cfg = config;
  cfg.record_population_at.clear();
  cfg.keep_log = false;
  if (std::isinf(cfg.max_time) && dist.critical()) cfg.max_time = default_max_time(motion, dist, x_grid.back());
  if (!cfg.stop_level) cfg.stop_level = x_grid.back();
  if (dist.is_heavy_tail() && dist.gamma() < 1.2) {
    result.warnings.push_back("offspring tail index gamma < 1.2: total progeny is extremely heavy-tailed; "
                              "the default truncation caps may be too small");
  }

  const StableSampler sampler(motion);
  const std::size_t n_tasks = block_count(n_reps, run.block);
  auto task = [&](std::size_t t) {
    TailTask acc{TailCounter(x_grid), TailCounter(x_grid), {}, 0};
    RngStream rng(run.seed, StreamPurpose::kTreeSim, t);
    const std::uint64_t begin = static_cast<std::uint64_t>(t) * run.block;
    const std::uint64_t end = std::min<std::uint64_t>(n_reps, begin + run.block);
    for (std::uint64_t i = begin; i < end; ++i) {
      const TreeOutcome o = simulate_tree(sampler, dist, cfg, rng);
      acc.fine.add(o.m_skeleton, o.truncated);
      if (cfg.coupled_coarse) acc.coarse.add(o.m_coarse, o.truncated);
      acc.particles.add(static_cast<double>(o.total_particles));
      acc.stopped += o.stopped;
    }
    return acc;
  };
  auto merge = [](TailTask& into, TailTask&& part) {
    into.fine.merge(part.fine);
    into.coarse.merge(part.coarse);
    into.particles.merge(part.particles);
    into.stopped += part.stopped;
  };
  TailTask total = run_tasks(n_tasks, run.workers, task, merge, TailTask{TailCounter(x_grid), TailCounter(x_grid), {}, 0});

  result.estimate = total.fine.finalize();
  if (cfg.coupled_coarse) result.coarse = total.coarse.finalize();
  result.particles = total.particles;
  result.stopped = total.stopped;
  return result;
}

SurvivalCurve estimate_survival(const OffspringDist& dist, const std::vector<double>& t_grid, std::uint64_t n_reps,
                                const RunSettings& run, std::uint64_t population_cap) {
  if (std::abs(dist.mean() - 1.0) > 1e-12) throw InvalidArgument("estimate_survival needs a critical law (m = 1)");
  if (t_grid.empty() || !std::is_sorted(t_grid.begin(), t_grid.end())) {
    throw InvalidArgument("estimate_survival: t grid must be nonempty and ascending");
  }
  if (n_reps == 0) throw InvalidArgument("estimate_survival: n_reps must be positive");
  if (population_cap < 2) throw InvalidArgument("estimate_survival: population cap must be >= 2");

  const double t_max = t_grid.back();
  const double p0 = dist.prob(0);
  const double p1 = dist.prob(1);
  // Events where the particle is replaced by exactly one child leave the
  // population unchanged; only the others are simulated, at rate n (1 - p1).
  const double change = 1.0 - p1;

  struct Acc {
    std::vector<std::uint64_t> level;  // level[k]: trees alive at exactly the first k grid times
    std::uint64_t capped = 0;
  };
  const std::size_t g = t_grid.size();
  const std::size_t n_tasks = block_count(n_reps, run.block);
  auto task = [&](std::size_t t) {
    Acc acc{std::vector<std::uint64_t>(g + 1, 0), 0};
    RngStream rng(run.seed, StreamPurpose::kSurvival, t);
    const std::uint64_t begin = static_cast<std::uint64_t>(t) * run.block;
    const std::uint64_t end = std::min<std::uint64_t>(n_reps, begin + run.block);
    for (std::uint64_t i = begin; i < end; ++i) {
      double extinction = std::numeric_limits<double>::infinity();
      if (change > 0.0) {
        std::uint64_t n = 1;
        double now = 0.0;
        for (;;) {
          now += rng.exponential() / (static_cast<double>(n) * change);
          if (now > t_max) break;
          const double u = rng.uniform() * change;
          if (u < p0) {
            if (--n == 0) {
              extinction = now;
              break;
            }
            continue;
          }
          const std::uint64_t k = dist.quantile(std::min(u + p1, std::nextafter(1.0, 0.0)));
          if (k - 1 >= population_cap - n) {
            ++acc.capped;
            break;
          }
          n += k - 1;
        }
      }
      // N_t >= 1 exactly for t < extinction time.
      const auto k = static_cast<std::size_t>(std::lower_bound(t_grid.begin(), t_grid.end(), extinction) - t_grid.begin());
      ++acc.level[k];
    }
    return acc;
  };
  auto merge = [](Acc& into, Acc&& part) {
    for (std::size_t k = 0; k < into.level.size(); ++k) into.level[k] += part.level[k];
    into.capped += part.capped;
  };
  const Acc total = run_tasks(n_tasks, run.workers, task, merge, Acc{std::vector<std::uint64_t>(g + 1, 0), 0});

  SurvivalCurve c;
  c.ts = t_grid;
  c.n = n_reps;
  c.capped = total.capped;
  c.alive.assign(g, 0);
  std::uint64_t above = 0;
  for (std::size_t i = g; i-- > 0;) {
    above += total.level[i + 1];
    c.alive[i] = above;
  }
  for (std::size_t i = 0; i < g; ++i) {
    c.q_hat.push_back(static_cast<double>(c.alive[i]) / static_cast<double>(n_reps));
    const Interval ci = wilson_interval(c.alive[i], n_reps);
    c.ci_low.push_back(ci.low);
    c.ci_high.push_back(ci.high);
  }
  return c;
}

}  // namespace bsp
