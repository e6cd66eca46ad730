// Acceptance run: one PASS/FAIL line per criterion A1..A15.
//
//   acceptance [--out DIR] [--only A6,A10,...]
//
// Every criterion runs through the same subcommands as the `bsp` tool (or,
// for A1 and A3, samples the motion directly), with the sizes and tolerances
// the criteria state. Reports land in DIR/<criterion>/. Exit code 0 only if
// every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsp/parallel.hpp"
#include "bsp/stable_motion.hpp"
#include "bsp/stats.hpp"
#include "cli/commands.hpp"
#include "cli/output.hpp"

using namespace bsp;
using namespace bsp::cli;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string grid_list(double from, double ratio, double to) {
  std::string s;
  for (int k = 0;; ++k) {
    const double x = from * std::pow(ratio, k);
    if (x > to * (1.0 + 1e-12)) break;
    if (!s.empty()) s += ", ";
    s += format_double(x);
  }
  return s;
}

class Runner {
 public:
  explicit Runner(std::filesystem::path root) : root_(std::move(root)) {}

  CommandResult run(Command cmd, const std::string& config, const std::string& dir) {
    const RunConfig cfg = parse_config(config);
    Options opts;
    opts.out = root_ / dir;
    return run_command(cmd, cfg, opts);
  }

  const std::filesystem::path& root() const { return root_; }

  // The A6 tree run feeds A2, A10 and A11.
  const CommandResult& a6() {
    if (!a6_) a6_ = run(Command::Tail, a6_config(), "A6");
    return *a6_;
  }

  static std::string a6_model() {
    return "alpha = 1.2\n"
           "c_plus = 1\n"
           "c_minus = 0\n"
           "offspring = 0.6, 0, 0.4\n";
  }

 private:
  static std::string a6_config() {
    return a6_model() +
           "n_reps = 1e6\n"
           "step = 0.01\n"
           "coupled_coarse = true\n"
           "x_grid = " + grid_list(1.0, std::pow(2.0, 0.25), 2e4) + "\n"
           "tol_exponent = 0.1\n"
           "tol_amplitude = 0.25\n"
           "tol_step_bias = 0.03\n";
  }

  std::filesystem::path root_;
  std::optional<CommandResult> a6_;
};

const Json* find_check(const Json& report, const std::string& name) {
  for (const auto& c : report["verdict"]["checks"]) {
    if (c["name"] == name) return &c;
  }
  return nullptr;
}

double check_value(const Json& report, const std::string& name) {
  const Json* c = find_check(report, name);
  if (!c || (*c)["value"].is_null()) return std::nan("");
  return (*c)["value"].get<double>();
}

bool check_pass(const Json& report, const std::string& name) {
  const Json* c = find_check(report, name);
  return c && (*c)["pass"].get<bool>();
}

// Monte Carlo mean of g(xi_1) over n draws, in fixed blocks.
MomentAccumulator sample_unit(const StableParams& motion, std::uint64_t n, std::uint64_t seed,
                              const std::function<double(double)>& g) {
  const StableSampler sampler(motion);
  constexpr std::size_t kBlock = 1 << 16;
  auto task = [&](std::size_t t) {
    RngStream rng(seed, StreamPurpose::kIncrements, t);
    MomentAccumulator acc;
    const std::uint64_t count = std::min<std::uint64_t>(kBlock, n - t * kBlock);
    for (std::uint64_t i = 0; i < count; ++i) acc.add(g(sampler.unit(rng)));
    return acc;
  };
  auto merge = [](MomentAccumulator& a, MomentAccumulator&& b) { a.merge(b); };
  return run_tasks(block_count(n, kBlock), 1, task, merge, MomentAccumulator{});
}

// Right tail of a spectrally positive stable law with alpha in (1, 2) from its
// asymptotic series; used to explain the finite-x gap in A1.
double skewed_tail_series(double alpha, double c_plus, double x, int terms = 12) {
  const double pi = std::numbers::pi;
  const double rho = 1.0 - 1.0 / alpha;
  auto coef = [&](int n) {
    return (n % 2 ? 1.0 : -1.0) * std::tgamma(n * alpha) / std::tgamma(n + 1.0) * std::sin(n * pi * alpha * rho) / pi;
  };
  const double scale_pow = c_plus / alpha / coef(1);
  double sum = 0.0;
  for (int n = 1; n <= terms; ++n) sum += coef(n) * std::pow(scale_pow / std::pow(x, alpha), n);
  return sum;
}

// ---------------------------------------------------------------------------

Outcome a1(Runner&) {
  const StableParams motion = derive_params(1.2, 1.0, 0.0);
  const std::vector<double> xs{10.0, 20.0, 50.0, 100.0};
  std::ostringstream d;
  double worst = 0.0;
  for (double x : xs) {
    const MomentAccumulator m = sample_unit(motion, 10'000'000, 101, [x](double v) { return v >= x ? 1.0 : 0.0; });
    const double rel = std::pow(x, 1.2) * m.mean() * 1.2 / 1.0 - 1.0;
    worst = std::max(worst, std::abs(rel));
    const double series = std::pow(x, 1.2) * skewed_tail_series(1.2, 1.0, x) * 1.2 - 1.0;
    d << " x=" << num(x) << ":" << num(rel, 3) << "[series " << num(series, 3) << "]";
  }
  return {worst <= 0.15, "max |x^a P(xi_1 >= x) a / c+ - 1| = " + num(worst, 3) + " (<= 0.15);" + d.str()};
}

Outcome a2(Runner& r) {
  const Json& rep = r.a6().report;
  const double shift = check_value(rep, "step_bias");
  return {check_pass(rep, "step_bias"),
          "fitted exponent, step 0.01 minus step 0.02 (same trees) = " + num(shift, 3) + " (|.| < 0.03)"};
}

Outcome a3(Runner&) {
  const StableParams motion = derive_params(1.5, 0.0, 1.0);
  const MomentAccumulator m = sample_unit(motion, 10'000'000, 103, [](double v) { return std::exp(0.3 * v); });
  const double rel = m.mean() / exp_moment(motion, 0.3) - 1.0;
  return {std::abs(rel) <= 0.02, "E e^{0.3 xi_1} / exp(C1 0.3^1.5) - 1 = " + num(rel, 3) + " +- " +
                                      num(m.standard_error() / exp_moment(motion, 0.3), 2) + " (|.| <= 0.02)"};
}

Outcome a4(Runner& r) {
  const CommandResult res = r.run(Command::Survival,
                                  "alpha = 1.5\nc_plus = 1\nc_minus = 1\noffspring = 0.5, 0, 0.5\n"
                                  "t_grid = 100\nn_reps = 1e6\ntol_survival = 0.1\n",
                                  "A4");
  const double rel = check_value(res.report, "kolmogorov_relative_error");
  return {res.pass, "t Q(t) sigma^2 / 2 - 1 at t = 100: " + num(rel, 3) + " (|.| <= 0.10)"};
}

Outcome a5(Runner& r) {
  const CommandResult res = r.run(Command::Survival,
                                  "alpha = 1.5\nc_plus = 1\nc_minus = 1\n"
                                  "offspring_family = heavy\noffspring_gamma = 1.5\noffspring_kappa = 0.1\n"
                                  "offspring_mean = 1\nt_grid = 100, 300, 1000\nn_reps = 1e7\n"
                                  "survival_spread = 0.2\ntol_conjecture = 0.3\n",
                                  "A5");
  const Json& rep = res.report;
  std::ostringstream d;
  d << "t^2 Q(t) at t = 100, 300, 1000:";
  const auto& t = rep["t"];
  const auto& q = rep["q_hat"];
  for (std::size_t i = 0; i < t.size(); ++i) d << " " << num(t[i].get<double>() * t[i].get<double>() * q[i].get<double>());
  d << "; spread " << num(rep["spread"].get<double>(), 3) << " (<= 0.20)";
  const auto& conj = rep["conjectured_level"];
  d << "; conjectured level ratio " << num(conj["scaled_mean"].get<double>(), 3)
    << (conj["within_band"].get<bool>() ? " within" : " OUTSIDE") << " the 30% band (finding only)";
  return {res.pass, d.str()};
}

std::string fit_detail(const Json& rep) {
  const Json& a = rep["analysis"];
  if (!a.contains("fit")) return "no fit window: " + a.value("window_error", std::string("?"));
  const Json& f = a["fit"];
  std::string s = "window [" + num(f["x_lo"].get<double>()) + ", " + num(f["x_hi"].get<double>()) + "] (" +
                  std::to_string(f["points"].get<int>()) + " pts), fitted " + num(f["value"].get<double>()) + " +- " +
                  num(f["value_stderr"].get<double>(), 2);
  return s;
}

Outcome a6(Runner& r) {
  const Json& rep = r.a6().report;
  const double amp_rel = check_value(rep, "amplitude_relative_error");
  const double amp = rep["analysis"].contains("pinned_amplitude")
                         ? rep["analysis"]["pinned_amplitude"]["amplitude"].get<double>()
                         : std::nan("");
  return {check_pass(rep, "exponent") && check_pass(rep, "amplitude_relative_error"),
          fit_detail(rep) + " (1.2 +- 0.1); amplitude at exponent 1.2: " + num(amp) + " vs 25/6, rel " + num(amp_rel, 3) +
              " (|.| <= 0.25)"};
}

Outcome a7(Runner& r) {
  const CommandResult res = r.run(Command::Tail,
                                  "alpha = 1.2\nc_plus = 1\nc_minus = 0\noffspring = 0.5, 0, 0.5\n"
                                  "n_reps = 1e6\nstep = 0.1\nx_grid = " + grid_list(1.0, 1.25, 2000.0) + "\n"
                                  "tol_exponent = 0.08\ntol_amplitude = 0.25\n",
                                  "A7");
  const Json& rep = res.report;
  const double amp = rep["analysis"].contains("pinned_amplitude")
                         ? rep["analysis"]["pinned_amplitude"]["amplitude"].get<double>()
                         : std::nan("");
  return {res.pass, fit_detail(rep) + " (0.6 +- 0.08); amplitude at exponent 0.6: " + num(amp) + " vs " +
                        num(std::sqrt(1.0 / 0.6)) + ", rel " + num(check_value(rep, "amplitude_relative_error"), 3) +
                        " (|.| <= 0.25)"};
}

Outcome a8(Runner& r) {
  const CommandResult res = r.run(Command::Tail,
                                  "alpha = 1.5\nc_plus = 0\nc_minus = 1\noffspring = 0.5, 0, 0.5\n"
                                  "n_reps = 2e5\nstep = 0.02\nmax_time = 3000\n"
                                  "x_grid = " + grid_list(1.0, 1.25, 1000.0) + "\n"
                                  "tol_exponent = 0.15\nplateau_cv_max = 0.2\n",
                                  "A8");
  const Json& rep = res.report;
  std::string d = fit_detail(rep) + " (1.5 +- 0.15)";
  if (rep["analysis"].contains("plateau")) {
    d += "; plateau constant " + num(rep["analysis"]["plateau"]["constant"].get<double>()) + " (> 0), CV " +
         num(rep["analysis"]["plateau"]["cv"].get<double>(), 3) + " (< 0.20)";
  }
  return {res.pass, d};
}

std::string a9_config() {
  return "alpha = 1.5\nc_plus = 0\nc_minus = 1\noffspring = 0.75, 0, 0.25\n"
         "n_reps = 1e6\nstep = 0.02\nx_grid = auto\ntol_rate = 0.1\n";
}

Outcome a9(Runner& r) {
  const CommandResult res = r.run(Command::Tail, a9_config(), "A9");
  const Json& rep = res.report;
  const double a0 = rep["prediction"]["exponent_or_rate"].get<double>();
  std::string d = fit_detail(rep) + " vs a0 = " + num(a0) + ", rel " + num(check_value(rep, "rate_relative_error"), 3) +
                  " (|.| <= 0.10)";
  if (rep["analysis"].contains("plateau")) {
    const auto& v = rep["analysis"]["plateau"]["values"];
    d += "; e^{a0 x} u_hat over the window:";
    for (const auto& e : v) d += " " + num(e.get<double>(), 4);
    d += check_pass(rep, "scaled_tail_nonincreasing") ? " (nonincreasing)" : " (NOT nonincreasing)";
  }
  return {res.pass, d};
}

const CommandResult& integral_run(Runner& r) {
  static std::optional<CommandResult> res;
  if (!res) {
    r.a6();
    res = r.run(Command::SolveIntegral,
                Runner::a6_model() + "kernel_n = 1e6\nkernel_step = 0.01\nsolve_tol = 1e-6\n"
                                     "mc_tail_csv = " + (r.root() / "A6" / "tail.csv").string() + "\n"
                                     "tol_cross_abs = 0.02\ntol_cross_ci = 3\nremainder_max = 0.05\n",
                "A10");
  }
  return *res;
}

Outcome a10(Runner& r) {
  const Json& rep = integral_run(r).report;
  const bool ok = rep["converged"].get<bool>() && check_pass(rep, "residual") && check_pass(rep, "mc_agreement");
  return {ok, "solver residual " + num(rep["residual_sup"].get<double>(), 3) + " (< 1e-6) after " +
                  std::to_string(rep["iterations"].get<int>()) + " sweeps; sup |u - u_hat| = " +
                  num(rep["monte_carlo"]["sup_norm"].get<double>(), 3) + " over " +
                  std::to_string(rep["monte_carlo"]["shared_points"].get<int>()) +
                  " shared points, worst ratio to max(3 CI, 0.02) = " +
                  num(rep["monte_carlo"]["worst_ratio_to_allowance"].get<double>(), 3) + " (<= 1)"};
}

Outcome a11(Runner& r) {
  const Json& rep = integral_run(r).report;
  std::string d = "Phi_R / Phi_0 at the three largest grid points:";
  for (const auto& e : rep["one_step_functionals"]) d += " x=" + num(e["x"].get<double>()) + ":" + num(e["ratio"].get<double>(), 3);
  d += " (decreasing, final < 0.05)";
  return {check_pass(rep, "remainder_ratio_decreasing") && check_pass(rep, "remainder_ratio_final"), d};
}

Outcome a12(Runner& r) {
  const CommandResult first = r.run(Command::VerifyLimits,
                                    "alpha = 0.5\nc_plus = 1\nc_minus = 0\noffspring = 0.5, 0, 0.5\n"
                                    "lambda_grid = 0.1, 0.01, 0.001\nlimit_reps = 1e7\nlimit_step = 0.05\ntol_limit = 0.1\n",
                                    "A12a");
  const CommandResult second = r.run(Command::VerifyLimits,
                                     "alpha = 1.5\nc_plus = 1\nc_minus = 1\noffspring = 0.5, 0, 0.5\n"
                                     "lambda_grid = 0.1, 0.01\nlimit_reps = 1e7\nlimit_step = 0.05\ntol_limit = 0.15\n",
                                     "A12b");
  auto describe = [](const Json& rep) {
    std::string s;
    for (const auto& p : rep["points"]) {
      s += " l=" + num(p["lambda"].get<double>()) + ":" + num(p["ratio"].get<double>());
      if (!p["ratio_xi_plus"].is_null()) s += "[xi+ " + num(p["ratio_xi_plus"].get<double>()) + "]";
    }
    return s + " limit " + num(rep["limit"].get<double>());
  };
  return {first.pass && second.pass,
          std::string("first-order (alpha 0.5) ") + (first.pass ? "pass" : "FAIL") + ":" + describe(first.report) +
              " (10% at 1e-3); second-order (alpha 1.5) " + (second.pass ? "pass" : "FAIL") + ":" +
              describe(second.report) + " (15% at 1e-2)"};
}

Outcome a13(Runner& r) {
  const CommandResult res = r.run(Command::SolvePhi,
                                  "alpha = 1.5\nc_plus = 0\nc_minus = 1\noffspring = 0.5, 0, 0.5\n"
                                  "phi_paths = 1e4\nphi_points = 41\nphi_step = 0.01\nenvelope_paths = 1e4\n"
                                  "phi_agreement = 2\n",
                                  "A13");
  const Json& rep = res.report;
  return {res.pass && res.converged,
          "invariants " + std::string(check_pass(rep, "invariants") ? "held" : "BROKEN") + "; sweeps " +
              std::to_string(rep["start_one"]["iterations"].get<int>()) + " / " +
              std::to_string(rep["start_envelope"]["iterations"].get<int>()) + "; two-start gap / allowance " +
              num(check_value(rep, "two_start_agreement"), 3) + " (<= 1); envelope violations " +
              num(check_value(rep, "envelope_violations")) + ", worst margin " +
              num(rep["envelope"]["worst_margin"].get<double>(), 3)};
}

Outcome a14(Runner& r) {
  const CommandResult res = r.run(Command::FkCheck,
                                  a9_config() + "fk_x = 8\nfk_y = 4\nfk_paths = 1e5\nfk_step = 0.01\n"
                                                "tol_fk = 0.1\nfk_bound_slack = 1.02\n",
                                  "A14");
  const Json& rep = res.report;
  return {res.pass, "u(8) = " + num(rep["u_x"].get<double>()) + ", Feynman-Kac side " + num(rep["rhs"].get<double>()) +
                        " +- " + num(rep["rhs_stderr"].get<double>(), 2) + ", rel error " +
                        num(rep["rel_error"].get<double>(), 3) + " (< 0.10); bound e^{-a0 4} u(4) = " +
                        num(rep["first_passage_bound"].get<double>()) + " (u(8) <= 1.02 x bound)"};
}

Outcome a15(Runner& r) {
  const std::vector<std::pair<Command, std::string>> runs{
      {Command::Predict, "alpha = 1.2\nc_plus = 1\noffspring = 0.6, 0, 0.4\n"},
      {Command::Tail, "alpha = 1.2\nc_plus = 1\noffspring = 0.6, 0, 0.4\nn_reps = 20000\nstep = 0.05\n"
                      "coupled_coarse = true\nworkers = 2\n"},
      {Command::Survival, "alpha = 1.5\nc_plus = 1\nc_minus = 1\noffspring = 0.5, 0, 0.5\nt_grid = 10, 100\n"
                          "n_reps = 1e5\n"},
      {Command::SolveIntegral, "alpha = 1.2\nc_plus = 1\noffspring = 0.6, 0, 0.4\nn_reps = 20000\nstep = 0.05\n"
                               "kernel_n = 20000\n"},
      {Command::SolvePhi, "alpha = 1.5\nc_minus = 1\noffspring = 0.5, 0, 0.5\nphi_paths = 500\nphi_points = 21\n"
                          "envelope_paths = 1000\nworkers = 2\n"},
      {Command::VerifyLimits, "alpha = 1.5\nc_plus = 1\nc_minus = 1\noffspring = 0.5, 0, 0.5\nlimit_reps = 1e5\n"},
      {Command::FkCheck, "alpha = 1.5\nc_minus = 1\noffspring = 0.75, 0, 0.25\nn_reps = 1e5\nfk_paths = 1e4\n"},
  };
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& [cmd, text] : runs) {
    const std::string name(command_name(cmd));
    r.run(cmd, text, "A15/first/" + name);
    r.run(cmd, text, "A15/second/" + name);
    for (const auto& e : std::filesystem::directory_iterator(r.root() / "A15" / "first" / name)) {
      const std::string file = e.path().filename().string();
      if (file == "manifest.json") continue;  // carries the wall time
      ++files;
      const auto other = r.root() / "A15" / "second" / name / file;
      if (!std::filesystem::exists(other) || read_file(e.path()) != read_file(other)) differing.push_back(name + "/" + file);
    }
  }
  std::string d = std::to_string(files) + " CSV/JSON outputs from " + std::to_string(runs.size()) +
                  " subcommands compared byte for byte";
  if (!differing.empty()) {
    d += "; differing:";
    for (const auto& f : differing) d += " " + f;
  }
  return {differing.empty() && files > 0, d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1..A15"};
  std::string out = "acceptance_out";
  std::string only;
  app.add_option("--out", out, "Directory for reports");
  app.add_option("--only", only, "Comma-separated subset, e.g. A6,A10");
  CLI11_PARSE(app, argc, argv);

  std::set<std::string> selected;
  std::stringstream ss(only);
  for (std::string id; std::getline(ss, id, ',');) {
    if (!id.empty()) selected.insert(id);
  }

  const std::vector<std::pair<std::string, std::function<Outcome(Runner&)>>> criteria{
      {"A1", a1},   {"A2", a2},   {"A3", a3},   {"A4", a4},   {"A5", a5},
      {"A6", a6},   {"A7", a7},   {"A8", a8},   {"A9", a9},   {"A10", a10},
      {"A11", a11}, {"A12", a12}, {"A13", a13}, {"A14", a14}, {"A15", a15},
  };
  Runner runner(out);
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn(runner);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << num(secs, 3) << " s]"
              << std::endl;
  }
  return all ? 0 : 1;
}
