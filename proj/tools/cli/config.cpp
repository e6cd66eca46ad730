#include "cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace bsp::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Field {
  std::string key;
  std::string_view value;
  int line;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line) + ", key '" + key + "': " + what, key, line);
  }

  double number() const {
    double v = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) fail("expected a number, got '" + std::string(value) + "'");
    return v;
  }

  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }

  std::uint64_t count() const {
    const double v = number();
    if (!(v >= 1.0) || v != std::floor(v) || v > 9.0e15) fail("expected a positive integer");
    return static_cast<std::uint64_t>(v);
  }

  bool boolean() const {
    if (value == "true") return true;
    if (value == "false") return false;
    fail("expected true or false");
  }

  std::vector<double> list() const {
    std::vector<double> out;
    std::string_view rest = value;
    while (true) {
      const auto comma = rest.find(',');
      Field item{key, trim(rest.substr(0, comma)), line};
      if (item.value.empty()) fail("empty list entry");
      out.push_back(item.number());
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  std::vector<double> ascending_positive_list() const {
    std::vector<double> v = list();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0.0)) fail("entries must be positive");
      if (i > 0 && !(v[i] > v[i - 1])) fail("entries must be strictly ascending");
    }
    return v;
  }
};

using Setter = std::function<void(RunConfig&, const Field&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table{
      {"alpha", [](RunConfig& c, const Field& f) { c.alpha = f.number(); }},
      {"c_plus", [](RunConfig& c, const Field& f) { c.c_plus = f.number(); }},
      {"c_minus", [](RunConfig& c, const Field& f) { c.c_minus = f.number(); }},
      {"eta", [](RunConfig& c, const Field& f) { c.eta = f.number(); }},
      {"offspring", [](RunConfig& c, const Field& f) { c.offspring = f.list(); }},
      {"offspring_family",
       [](RunConfig& c, const Field& f) {
         if (f.value != "heavy") f.fail("the only family is 'heavy'");
         c.heavy_family = true;
       }},
      {"offspring_gamma", [](RunConfig& c, const Field& f) { c.offspring_gamma = f.number(); }},
      {"offspring_kappa", [](RunConfig& c, const Field& f) { c.offspring_kappa = f.number(); }},
      {"offspring_mean", [](RunConfig& c, const Field& f) { c.offspring_mean = f.number(); }},
      {"step", [](RunConfig& c, const Field& f) { c.step = f.positive(); }},
      {"n_reps", [](RunConfig& c, const Field& f) { c.n_reps = f.count(); }},
      {"x_grid",
       [](RunConfig& c, const Field& f) {
         if (f.value == "auto") {
           c.x_grid.reset();
         } else {
           c.x_grid = f.ascending_positive_list();
         }
       }},
      {"grid_ratio",
       [](RunConfig& c, const Field& f) {
         c.grid_ratio = f.number();
         if (!(c.grid_ratio > 1.0)) f.fail("must exceed 1");
       }},
      {"pilot_reps", [](RunConfig& c, const Field& f) { c.pilot_reps = f.count(); }},
      {"x_max_cap", [](RunConfig& c, const Field& f) { c.x_max_cap = f.positive(); }},
      {"max_particles", [](RunConfig& c, const Field& f) { c.max_particles = f.count(); }},
      {"max_time", [](RunConfig& c, const Field& f) { c.max_time = f.positive(); }},
      {"coupled_coarse", [](RunConfig& c, const Field& f) { c.coupled_coarse = f.boolean(); }},
      {"t_grid", [](RunConfig& c, const Field& f) { c.t_grid = f.ascending_positive_list(); }},
      {"population_cap", [](RunConfig& c, const Field& f) { c.population_cap = f.count(); }},
      {"window_rel_halfwidth", [](RunConfig& c, const Field& f) { c.window.max_rel_halfwidth = f.positive(); }},
      {"window_octaves", [](RunConfig& c, const Field& f) { c.window.octaves = static_cast<unsigned>(f.count()); }},
      {"window_min_points", [](RunConfig& c, const Field& f) { c.window.min_points = f.count(); }},
      {"tol_exponent", [](RunConfig& c, const Field& f) { c.tol_exponent = f.positive(); }},
      {"tol_amplitude", [](RunConfig& c, const Field& f) { c.tol_amplitude = f.positive(); }},
      {"tol_rate", [](RunConfig& c, const Field& f) { c.tol_rate = f.positive(); }},
      {"tol_step_bias", [](RunConfig& c, const Field& f) { c.tol_step_bias = f.positive(); }},
      {"plateau_cv_max", [](RunConfig& c, const Field& f) { c.plateau_cv_max = f.positive(); }},
      {"tol_survival", [](RunConfig& c, const Field& f) { c.tol_survival = f.positive(); }},
      {"survival_spread", [](RunConfig& c, const Field& f) { c.survival_spread = f.positive(); }},
      {"tol_conjecture", [](RunConfig& c, const Field& f) { c.tol_conjecture = f.positive(); }},
      {"kernel_n", [](RunConfig& c, const Field& f) { c.kernel_n = f.count(); }},
      {"kernel_step", [](RunConfig& c, const Field& f) { c.kernel_step = f.positive(); }},
      {"solve_tol", [](RunConfig& c, const Field& f) { c.solve_tol = f.positive(); }},
      {"solve_damping", [](RunConfig& c, const Field& f) { c.solve_damping = f.positive(); }},
      {"solve_max_iter", [](RunConfig& c, const Field& f) { c.solve_max_iter = static_cast<int>(f.count()); }},
      {"solve_fine_step", [](RunConfig& c, const Field& f) { c.solve_fine_step = f.positive(); }},
      {"solve_fine_to", [](RunConfig& c, const Field& f) { c.solve_fine_to = f.positive(); }},
      {"compare_mc", [](RunConfig& c, const Field& f) { c.compare_mc = f.boolean(); }},
      {"mc_tail_csv", [](RunConfig& c, const Field& f) { c.mc_tail_csv = std::filesystem::path(std::string(f.value)); }},
      {"tol_cross_abs", [](RunConfig& c, const Field& f) { c.tol_cross_abs = f.positive(); }},
      {"tol_cross_ci", [](RunConfig& c, const Field& f) { c.tol_cross_ci = f.positive(); }},
      {"remainder_max", [](RunConfig& c, const Field& f) { c.remainder_max = f.positive(); }},
      {"phi_y_max", [](RunConfig& c, const Field& f) { c.phi_y_max = f.positive(); }},
      {"phi_points",
       [](RunConfig& c, const Field& f) {
         c.phi_points = f.count();
         if (c.phi_points < 3) f.fail("need at least 3 points");
       }},
      {"phi_paths", [](RunConfig& c, const Field& f) { c.phi_paths = f.count(); }},
      {"phi_step", [](RunConfig& c, const Field& f) { c.phi_path.step = f.positive(); }},
      {"phi_rel_scale", [](RunConfig& c, const Field& f) { c.phi_path.rel_scale = f.positive(); }},
      {"phi_max_steps", [](RunConfig& c, const Field& f) { c.phi_path.max_steps = f.count(); }},
      {"phi_tol", [](RunConfig& c, const Field& f) { c.phi_tol = f.positive(); }},
      {"phi_damping", [](RunConfig& c, const Field& f) { c.phi_damping = f.positive(); }},
      {"phi_max_iter", [](RunConfig& c, const Field& f) { c.phi_max_iter = static_cast<int>(f.count()); }},
      {"envelope_paths", [](RunConfig& c, const Field& f) { c.envelope_paths = f.count(); }},
      {"phi_agreement", [](RunConfig& c, const Field& f) { c.phi_agreement = f.positive(); }},
      {"lambda_grid", [](RunConfig& c, const Field& f) {
         c.lambda_grid = f.list();
         for (double l : c.lambda_grid) {
           if (!(l > 0.0)) f.fail("entries must be positive");
         }
       }},
      {"limit_reps", [](RunConfig& c, const Field& f) { c.limit_reps = f.count(); }},
      {"limit_step", [](RunConfig& c, const Field& f) { c.limit_step = f.positive(); }},
      {"tol_limit", [](RunConfig& c, const Field& f) { c.tol_limit = f.positive(); }},
      {"fk_x", [](RunConfig& c, const Field& f) { c.fk_x = f.number(); }},
      {"fk_y", [](RunConfig& c, const Field& f) { c.fk_y = f.number(); }},
      {"fk_paths", [](RunConfig& c, const Field& f) { c.fk_paths = f.count(); }},
      {"fk_step", [](RunConfig& c, const Field& f) { c.fk_path.step = f.positive(); }},
      {"fk_rel_scale", [](RunConfig& c, const Field& f) { c.fk_path.rel_scale = f.positive(); }},
      {"fk_max_steps", [](RunConfig& c, const Field& f) { c.fk_path.max_steps = f.count(); }},
      {"tol_fk", [](RunConfig& c, const Field& f) { c.tol_fk = f.positive(); }},
      {"fk_bound_slack", [](RunConfig& c, const Field& f) { c.fk_bound_slack = f.positive(); }},
      {"seed",
       [](RunConfig& c, const Field& f) {
         std::uint64_t v = 0;
         const auto* end = f.value.data() + f.value.size();
         const auto [ptr, ec] = std::from_chars(f.value.data(), end, v);
         if (ec != std::errc{} || ptr != end) f.fail("expected an unsigned 64-bit integer");
         c.seed = v;
       }},
      {"workers", [](RunConfig& c, const Field& f) { c.workers = static_cast<unsigned>(f.count()); }},
      {"block", [](RunConfig& c, const Field& f) { c.block = f.count(); }},
  };
  return table;
}

// Cross-field checks, then build the motion and the law once so that their
// own validation runs before any computation.
void validate(const RunConfig& c, const std::map<std::string, int>& lines) {
  auto line_of = [&](const std::string& key) {
    const auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  };
  if (!lines.count("alpha")) throw ConfigError("missing required key 'alpha'", "alpha");
  const bool explicit_law = lines.count("offspring") > 0;
  if (explicit_law == c.heavy_family) {
    throw ConfigError("give exactly one of 'offspring' (explicit probabilities) or 'offspring_family = heavy'",
                      "offspring", line_of(explicit_law ? "offspring" : "offspring_family"));
  }
  if (c.heavy_family && (!c.offspring_gamma || !c.offspring_kappa)) {
    const std::string key = c.offspring_gamma ? "offspring_kappa" : "offspring_gamma";
    throw ConfigError("the heavy-tail family needs both its tail index (offspring_gamma) and its tail weight "
                      "(offspring_kappa); without them no tail prediction exists",
                      key, line_of("offspring_family"));
  }
  if (!c.heavy_family) {
    for (const char* key : {"offspring_gamma", "offspring_kappa", "offspring_mean"}) {
      if (lines.count(key)) throw ConfigError(std::string("'") + key + "' only applies to offspring_family = heavy", key, line_of(key));
    }
  }
  if (c.x_max_cap && c.x_grid) throw ConfigError("x_max_cap only applies to x_grid = auto", "x_max_cap", line_of("x_max_cap"));
  if (c.solve_damping > 1.0) throw ConfigError("solve_damping must lie in (0, 1]", "solve_damping", line_of("solve_damping"));
  if (c.phi_damping > 1.0) throw ConfigError("phi_damping must lie in (0, 1]", "phi_damping", line_of("phi_damping"));
  try {
    (void)c.motion();
  } catch (const Error& e) {
    throw ConfigError(std::string("motion: ") + e.what(), "alpha", line_of("alpha"));
  }
  try {
    (void)c.offspring_dist();
  } catch (const Error& e) {
    const std::string key = c.heavy_family ? "offspring_family" : "offspring";
    throw ConfigError(std::string("offspring law: ") + e.what(), key, line_of(key));
  }
}

}  // namespace

StableParams RunConfig::motion() const { return derive_params(alpha, c_plus, c_minus, eta); }

OffspringDist RunConfig::offspring_dist() const {
  if (heavy_family) return OffspringDist::make_heavy_tail(*offspring_gamma, *offspring_kappa, offspring_mean);
  return OffspringDist::make_explicit(offspring);
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, int> lines;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'", "", line_no);
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'", key, line_no);
    if (lines.count(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' repeats line " + std::to_string(lines[key]),
                        key, line_no);
    }
    const Field field{key, value, line_no};
    if (value.empty()) field.fail("missing value");
    it->second(cfg, field);
    lines[key] = line_no;
    cfg.entries.emplace_back(key, std::string(value));
  }
  std::sort(cfg.entries.begin(), cfg.entries.end());
  validate(cfg, lines);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string(), "");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (const unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : cfg.entries) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

}  // namespace bsp::cli
