#include <algorithm>
#include <cmath>
#include <vector>

#include "bsp/errors.hpp"
#include "bsp/fk_solver.hpp"
#include "doctest.h"

using namespace bsp;

namespace {

const OffspringDist kBinary = OffspringDist::make_explicit({0.5, 0.0, 0.5});
const OffspringDist kHalf = OffspringDist::make_explicit({0.75, 0.0, 0.25});

// xi_t = t: the dual path runs down at unit speed and every expectation is a
// deterministic integral.
StableParams unit_drift() { return derive_params(1.0, 0.0, 0.0, -1.0); }

std::vector<double> uniform_grid(double step, double to) {
  std::vector<double> xs;
  const auto n = static_cast<int>(std::lround(to / step));
  for (int i = 0; i <= n; ++i) xs.push_back(step * i);
  return xs;
}

}  // namespace

TEST_CASE("unit drift: phi solves phi' = -C2 phi^2") {
  const auto motion = unit_drift();
  const double extent = phi_grid_extent(motion, kBinary);
  CHECK(extent == doctest::Approx(-std::log(1e-4) / 0.5));

  PhiSettings cfg;
  cfg.n_paths = 1;
  cfg.path.step = 0.01;
  cfg.path.rel_scale = 0.02;
  cfg.tol = 1e-10;
  const PhiGrid phi = picard_phi(motion, kBinary, uniform_grid(0.25, 20.0), cfg, {1, 1, 4096});
  REQUIRE(phi.converged);
  CHECK(phi.invariants_held);
  CHECK(phi.paths_escaped == 0);
  CHECK(phi.paths_budget == 0);
  for (std::size_t i = 0; i < phi.ys.size(); ++i) {
    CHECK(phi.phi[i] == doctest::Approx(2.0 / (2.0 + phi.ys[i])).epsilon(2e-3));
  }

  const EnvelopeCheck env = check_envelope(phi, motion, 1, cfg.path, {1, 1, 4096});
  CHECK(env.c == doctest::Approx(0.5));
  CHECK(env.holds());
  CHECK(env.worst_margin > 0.0);
  for (std::size_t i = 0; i < env.factor.size(); ++i) {
    CHECK(env.factor[i] == doctest::Approx(std::exp(-0.5 * 0.25)).epsilon(1e-9));
    CHECK(env.factor_exact[i] == doctest::Approx(std::exp(-0.5 * 0.25)).epsilon(1e-12));
  }

  // A curve decaying faster than the envelope allows is flagged.
  PhiGrid steep = phi;
  for (std::size_t i = 0; i < steep.ys.size(); ++i) steep.phi[i] = std::exp(-steep.ys[i]);
  CHECK(check_envelope(steep, motion, 1, cfg.path, {1, 1, 4096}).violations == steep.ys.size() - 1);
}

TEST_CASE("stable dual paths: invariants, start independence and the envelope") {
  const auto motion = derive_params(1.5, 0.0, 1.0);
  const std::vector<double> ys = uniform_grid(1.0, 16.0);
  PhiSettings cfg;
  cfg.n_paths = 1000;
  cfg.path.step = 0.02;
  cfg.tol = 1e-7;
  const RunSettings run{17, 1, 256};
  const PhiGrid a = picard_phi(motion, kBinary, ys, cfg, run);
  cfg.start = PhiStart::Envelope;
  const PhiGrid b = picard_phi(motion, kBinary, ys, cfg, run);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(a.invariants_held);
  CHECK(b.invariants_held);
  for (std::size_t i = 0; i < ys.size(); ++i) CHECK(std::abs(a.phi[i] - b.phi[i]) < 1e-5);
  CHECK(a.phi.back() > 0.0);
  CHECK(a.tail_rate >= 0.0);

  // Lower envelope exp(-(C2 / C1)^{1/alpha} y) from phi <= 1.
  const double rate = std::pow(kBinary.c2() / *motion.c1_alpha, 1.0 / 1.5);
  for (std::size_t i = 0; i < ys.size(); ++i) CHECK(a.phi[i] >= std::exp(-rate * ys[i]) - 3.0 * a.stderr_phi[i]);

  const EnvelopeCheck env = check_envelope(a, motion, 4000, cfg.path, run);
  CHECK(env.holds());
  for (std::size_t i = 0; i < env.factor.size(); ++i) {
    CHECK(env.factor[i] == doctest::Approx(env.factor_exact[i]).epsilon(0.03));
  }

  // Same seed on more workers: identical curve.
  const PhiGrid c = picard_phi(motion, kBinary, ys, cfg, {17, 3, 256});
  CHECK(c.phi == b.phi);
}

TEST_CASE("phi input validation") {
  const auto motion = derive_params(1.5, 0.0, 1.0);
  PhiSettings cfg;
  CHECK_THROWS_AS(picard_phi(derive_params(1.5, 1.0, 1.0), kBinary, {0.0, 1.0, 2.0}, cfg, {}), InvalidArgument);
  CHECK_THROWS_AS(picard_phi(motion, kHalf, {0.0, 1.0, 2.0}, cfg, {}), InvalidArgument);
  CHECK_THROWS_AS(picard_phi(motion, kBinary, {0.5, 1.0, 2.0}, cfg, {}), InvalidArgument);
  CHECK_THROWS_AS(picard_phi(motion, kBinary, {0.0, 2.0, 1.0}, cfg, {}), InvalidArgument);
}

TEST_CASE("unit drift: Feynman-Kac identity holds for the exact tail") {
  const auto motion = unit_drift();
  const std::vector<double> xs = uniform_grid(0.01, 20.0);
  std::vector<double> u;
  for (double x : xs) {
    const double r = std::exp(-0.5 * x) / 3.0;
    u.push_back(2.0 * r / (1.0 - r));
  }
  const TailCurve curve(xs, u, {TailKind::Exponential, 0.5});
  DualPathSettings path;
  path.step = 0.001;
  path.rel_scale = 0.01;

  const FkCheck fk = check_fk_identity(motion, kHalf, curve, 8.0, 4.0, 1, path, {1, 1, 4096});
  CHECK(fk.rel_error < 1e-4);
  REQUIRE(fk.first_passage_bound);
  CHECK(*fk.first_passage_bound == doctest::Approx(std::exp(-2.0) * curve(4.0)));
  CHECK(*fk.first_passage_bound >= fk.u_x);
  CHECK(fk.paths_budget == 0);

  const FkCheck same = check_fk_identity(motion, kHalf, curve, 3.0, 3.0, 10, path, {});
  CHECK(same.rel_error == 0.0);
  CHECK(same.rhs == same.u_y);

  // A wrong curve fails the identity.
  std::vector<double> wrong;
  for (double x : xs) wrong.push_back(std::exp(-0.3 * x));
  const FkCheck bad = check_fk_identity(motion, kHalf, TailCurve(xs, wrong), 8.0, 4.0, 1, path, {});
  CHECK(bad.rel_error > 0.3);

  std::vector<double> dead(xs.size(), 0.0);
  dead[0] = 1.0;
  CHECK_THROWS_AS(check_fk_identity(motion, kHalf, TailCurve(xs, dead), 8.0, 4.0, 1, path, {}), InsufficientData);
  CHECK_THROWS_AS(check_fk_identity(motion, kHalf, curve, 2.0, 4.0, 1, path, {}), InvalidArgument);
}

TEST_CASE("stable Feynman-Kac check is consistent with itself") {
  // With u = e^{-a0 x} the nonlinear term is positive, so the estimate sits
  // below the first-passage bound u(y) e^{-a0 (x - y)} = u(x).
  const auto motion = derive_params(1.5, 0.0, 1.0);
  const double a0 = std::pow(0.5 / *motion.c1_alpha, 1.0 / 1.5);
  const std::vector<double> xs = uniform_grid(0.05, 30.0);
  std::vector<double> u;
  for (double x : xs) u.push_back(std::exp(-a0 * x));
  const TailCurve curve(xs, u, {TailKind::Exponential, a0});
  DualPathSettings path;
  path.step = 0.01;
  const FkCheck fk = check_fk_identity(motion, kHalf, curve, 6.0, 3.0, 20000, path, {4, 1, 4096});
  REQUIRE(fk.first_passage_bound);
  CHECK(*fk.first_passage_bound == doctest::Approx(fk.u_x).epsilon(1e-12));
  CHECK(fk.rhs < fk.u_x);
  CHECK(fk.rhs_stderr > 0.0);
  CHECK(fk.rhs > 0.5 * fk.u_x);
}

TEST_CASE("plateau constant") {
  std::vector<double> xs;
  std::vector<double> u;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(std::ldexp(1.0, i));
    u.push_back(5.0 * std::pow(xs.back(), -1.5));
  }
  const TailEstimate est = TailEstimate::from_curve(xs, u);
  const PlateauEstimate p = estimate_plateau_constant(est, {2, 10}, TailKind::Power, 1.5);
  CHECK(p.constant == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(p.cv < 1e-12);
  CHECK(p.values.size() == 8);

  std::vector<double> ue;
  for (double x : xs) ue.push_back(2.0 * std::exp(-0.1 * x) * (1.0 + 1.0 / (1.0 + x)));
  const PlateauEstimate q = estimate_plateau_constant(TailEstimate::from_curve(xs, ue), {0, 10}, TailKind::Exponential, 0.1);
  CHECK(q.nonincreasing);
  CHECK(q.values.back() == doctest::Approx(2.0).epsilon(0.01));

  TailEstimate empty = est;
  std::fill(empty.u_hat.begin(), empty.u_hat.end(), 0.0);
  CHECK_THROWS_AS(estimate_plateau_constant(empty, {0, 10}, TailKind::Power, 1.5), InsufficientData);
}
