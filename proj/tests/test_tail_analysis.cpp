#include <cmath>
#include <vector>

#include "bsp/errors.hpp"
#include "bsp/tail_analysis.hpp"
#include "doctest.h"

using namespace bsp;

namespace {

const OffspringDist kBinary = OffspringDist::make_explicit({0.5, 0.0, 0.5});

std::vector<double> doubling_grid(double from, int count) {
  std::vector<double> xs;
  for (int i = 0; i < count; ++i) xs.push_back(from * std::ldexp(1.0, i));
  return xs;
}

std::vector<double> uniform_grid(double step, double to) {
  std::vector<double> xs;
  const auto n = static_cast<int>(std::lround(to / step));
  for (int i = 0; i <= n; ++i) xs.push_back(step * i);
  return xs;
}

}  // namespace

TEST_CASE("subcritical law with positive jumps: alpha-power tail with closed-form constant") {
  const auto motion = derive_params(1.2, 1.0, 0.5);
  const auto dist = OffspringDist::make_explicit({0.4, 0.4, 0.2});
  const RegimePrediction p = classify_regime(motion, dist);
  CHECK(p.regime == Regime::SubcriticalPosJumps);
  CHECK(p.kind == TailKind::Power);
  CHECK(p.exponent_or_rate == 1.2);
  REQUIRE(p.constant);
  CHECK(*p.constant == doctest::Approx(25.0 / 6.0).epsilon(1e-12));

  // Doubling c+ doubles the constant; the exponent does not move.
  const RegimePrediction q = classify_regime(derive_params(1.2, 2.0, 0.5), dist);
  CHECK(*q.constant == doctest::Approx(2.0 * *p.constant).epsilon(1e-12));
  CHECK(q.exponent_or_rate == p.exponent_or_rate);
}

TEST_CASE("critical law with positive jumps: exponent alpha / gamma") {
  const RegimePrediction p = classify_regime(derive_params(1.5, 1.0, 1.0), kBinary);
  CHECK(p.regime == Regime::CriticalPosJumps);
  CHECK(p.exponent_or_rate == doctest::Approx(0.75));
  REQUIRE(p.constant);
  CHECK(*p.constant == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));

  const auto heavy = OffspringDist::make_heavy_tail(1.5, 0.2, 1.0);
  const RegimePrediction h = classify_regime(derive_params(1.5, 1.0, 1.0), heavy);
  CHECK(h.exponent_or_rate == doctest::Approx(1.0));
  CHECK(*h.constant == doctest::Approx(std::pow(1.0 / (1.5 * heavy.c2()), 1.0 / 1.5)).epsilon(1e-12));
}

TEST_CASE("spectrally negative motions") {
  const auto motion = derive_params(1.5, 0.0, 1.0);
  const RegimePrediction crit = classify_regime(motion, kBinary);
  CHECK(crit.regime == Regime::CriticalSpectrallyNegative);
  CHECK(crit.exponent_or_rate == doctest::Approx(1.5));
  CHECK_FALSE(crit.constant);

  const auto half = OffspringDist::make_explicit({0.75, 0.0, 0.25});
  const RegimePrediction sub = classify_regime(motion, half);
  CHECK(sub.regime == Regime::SubcriticalSpectrallyNegative);
  CHECK(sub.kind == TailKind::Exponential);
  // E e^{a0 xi_1} = e^{1 - m} defines a0.
  CHECK(std::log(exp_moment(motion, sub.exponent_or_rate)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(sub.constant);
}

TEST_CASE("degenerate and unsupported inputs") {
  const RegimePrediction d = classify_regime(derive_params(0.7, 0.0, 1.0), kBinary);
  CHECK(d.regime == Regime::Degenerate);
  CHECK(d.kind == TailKind::None);
  CHECK_FALSE(d.note.empty());

  CHECK_THROWS_AS(classify_regime(derive_params(1.5, 1.0, 1.0), OffspringDist::make_explicit({0.0, 1.0})),
                  UnsupportedRegime);
  CHECK_THROWS_AS(classify_regime(derive_params(1.5, 1.0, 1.0), OffspringDist::make_explicit({0.2, 0.2, 0.6})),
                  InvalidArgument);
}

TEST_CASE("fits recover exact power and exponential curves") {
  const std::vector<double> xs = doubling_grid(1.0, 12);
  std::vector<double> pw;
  std::vector<double> ex;
  for (double x : xs) pw.push_back(3.0 * std::pow(x, -1.4));
  const std::vector<double> xe = uniform_grid(0.5, 10.0);
  for (double x : xe) ex.push_back(0.5 * std::exp(-2.0 * x));

  const TailEstimate ep = TailEstimate::from_curve(xs, pw);
  const TailFit fp = fit_power(ep, {0, xs.size()});
  CHECK(fp.value == doctest::Approx(1.4).epsilon(1e-10));
  CHECK(fp.amplitude == doctest::Approx(3.0).epsilon(1e-10));
  const PinnedAmplitude pa = pinned_amplitude(ep, {3, 9}, TailKind::Power, 1.4);
  CHECK(pa.amplitude == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(pa.log_stderr > 0.0);

  const TailEstimate ee = TailEstimate::from_curve(xe, ex);
  const TailFit fe = fit_exponential(ee, {0, xe.size()});
  CHECK(fe.value == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fe.amplitude == doctest::Approx(0.5).epsilon(1e-10));

  CHECK_THROWS_AS(fit_power(ep, {0, 3}), InsufficientData);
}

TEST_CASE("window spans the last trusted octaves") {
  const std::vector<double> xs = doubling_grid(1.0, 11);  // 1 .. 1024
  std::vector<double> u;
  for (double x : xs) u.push_back(1.0 / x);
  TailEstimate est = TailEstimate::from_curve(xs, u);
  IndexWindow w = select_window(est);
  CHECK(w.begin == 6);  // 64 = 1024 / 2^4
  CHECK(w.end == 11);

  // Losing the two farthest points moves the window down.
  est.u_hat[10] = 0.0;
  est.ci_low[9] = 0.0;
  w = select_window(est);
  CHECK(est.xs[w.end - 1] == 256.0);
  CHECK(est.xs[w.begin] == 16.0);

  // A wide truncation bracket disqualifies a point.
  TailEstimate wide = TailEstimate::from_curve(xs, u);
  wide.u_optimistic[10] = 2.0 * wide.u_hat[10];
  CHECK_FALSE(trusted_point(wide, 10, {}));
  CHECK(trusted_point(wide, 9, {}));

  WindowPolicy strict;
  strict.min_points = 6;
  CHECK_THROWS_AS(select_window(TailEstimate::from_curve(xs, u), strict), InsufficientData);
}

TEST_CASE("trapezoid Laplace transform") {
  const std::vector<double> xs = uniform_grid(0.01, 40.0);
  std::vector<double> one(xs.size(), 1.0);
  CHECK(numeric_laplace(xs, one, 2.0) == doctest::Approx(0.5).epsilon(1e-4));

  std::vector<double> ex;
  for (double x : xs) ex.push_back(std::exp(-x));
  CHECK(numeric_laplace(xs, ex, 1.0) == doctest::Approx(0.5).epsilon(1e-4));

  // Error halves twice per grid halving.
  auto error_at = [](double h) {
    const std::vector<double> g = uniform_grid(h, 40.0);
    std::vector<double> f;
    for (double x : g) f.push_back(std::exp(-x));
    return std::abs(numeric_laplace(g, f, 1.0) - 0.5);
  };
  CHECK(error_at(0.1) / error_at(0.05) == doctest::Approx(4.0).epsilon(0.01));

  // Short grid: needs a tail model.
  const std::vector<double> shortg = uniform_grid(0.01, 5.0);
  std::vector<double> fs;
  for (double x : shortg) fs.push_back(std::exp(-x));
  CHECK_THROWS_AS(numeric_laplace(shortg, fs, 1.0), InvalidArgument);
  const TailModel exp_tail{TailKind::Exponential, 1.0, 1.0};
  CHECK(numeric_laplace(shortg, fs, 1.0, exp_tail) == doctest::Approx(0.5).epsilon(1e-4));

  // Power tail x^{-2} beyond 5: int_5^inf e^{-x} x^{-2} dx = e^{-5}/5 - E1(5).
  std::vector<double> fp;
  for (double x : shortg) fp.push_back(x < 5.0 ? 0.0 : 1.0 / 25.0);
  fp.back() = 1.0 / 25.0;
  const TailModel pow_tail{TailKind::Power, 2.0, 1.0};
  const double e1_5 = 0.001148295591275;
  const double expect = std::exp(-5.0) / 5.0 - e1_5;
  const double trap_piece = 0.5 * 0.01 * std::exp(-5.0) / 25.0;
  CHECK(numeric_laplace(shortg, fp, 1.0, pow_tail) == doctest::Approx(expect + trap_piece).epsilon(1e-8));
}

TEST_CASE("one-step functionals") {
  const auto motion = derive_params(1.5, 1.0, 1.0);
  const PairKernel kernel = build_kernel(motion, 0.05, 20000, {3, 1, 4096});
  std::vector<double> xs = uniform_grid(0.5, 50.0);
  std::vector<double> u;
  for (double x : xs) u.push_back(1.0 / (1.0 + x));
  const TailCurve curve(xs, u, {TailKind::Power, 1.0});

  for (double x : {0.5, 2.0, 10.0}) {
    const PhiValues crit = phi_functionals(curve, kernel, kBinary, x);
    CHECK(crit.phi0 == 0.0);
    CHECK(crit.phi_r > 0.0);
    const PhiValues sub = phi_functionals(curve, kernel, OffspringDist::make_explicit({0.75, 0.0, 0.25}), x);
    CHECK(sub.phi0 > 0.0);
    CHECK(sub.phi_r >= 0.0);

    const PhiSandwich s = critical_sandwich(curve, kernel, kBinary, x, 0.1);
    CHECK(s.phi_r == doctest::Approx(crit.phi_r));
    CHECK(s.lower <= s.phi_r);
    CHECK(s.phi_r <= s.upper);
    CHECK(s.delta > 0.0);
  }
  // Binary: G(v) = v^2 / 2 exactly.
  const PhiSandwich s = critical_sandwich(curve, kernel, kBinary, 3.0, 0.05);
  double direct = 0.0;
  for (std::size_t j = 0; j < kernel.count_below(3.0); ++j) {
    const double v = curve(3.0 - kernel.xi()[j]);
    direct += 0.5 * v * v;
  }
  CHECK(s.phi_r == doctest::Approx(direct / static_cast<double>(kernel.n())).epsilon(1e-12));
}

TEST_CASE("small-lambda ratios approach their limit") {
  const auto motion = derive_params(0.7, 1.0, 1.0);
  const SmallLambdaReport rep = verify_small_lambda_limits(motion, 0.05, 200000, {0.1, 0.01}, {5, 1, 4096});
  CHECK_FALSE(rep.second_order);
  CHECK(rep.limit == doctest::Approx(1.0 / 0.7));
  REQUIRE(rep.points.size() == 2);
  for (const LimitPoint& p : rep.points) {
    CHECK(p.ratio > 0.0);
    CHECK(p.ratio_stderr > 0.0);
    CHECK(p.rel_error == doctest::Approx(std::abs(p.ratio / rep.limit - 1.0)));
  }
  // The first-order correction decays like lambda^{1 - alpha}.
  CHECK(rep.error_decreasing);
  CHECK(rep.points[1].rel_error < 0.6);

  const SmallLambdaReport second = verify_small_lambda_limits(derive_params(1.5, 1.0, 1.0), 0.05, 20000, {0.1},
                                                              {5, 1, 4096});
  CHECK(second.second_order);
  CHECK(second.limit == doctest::Approx(std::tgamma(0.5) / 1.5));
  CHECK(second.points[0].ratio_xi_plus);

  CHECK_THROWS_AS(verify_small_lambda_limits(derive_params(1.5, 0.0, 1.0), 0.05, 1000, {0.1}, {}),
                  InvalidArgument);
}
