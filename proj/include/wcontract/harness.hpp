#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wcontract/contraction.hpp"
#include "wcontract/counterexample.hpp"
#include "wcontract/diffusion_solver.hpp"
#include "wcontract/error.hpp"
#include "wcontract/interpolation.hpp"
#include "wcontract/nonlinearity.hpp"
#include "wcontract/radial_measure.hpp"
#include "wcontract/transport_entropy.hpp"

namespace wcontract::harness {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kSuccess = 0, kConfigError = 1, kNumericalFailure = 2, kVerdictMismatch = 3 };

inline int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::ConfigError || kind == ErrorKind::IoError ? kConfigError : kNumericalFailure;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline double to_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(text, &used);
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigError, "'" + key + "' is not a number: " + text);
  }
  if (used != text.size()) throw Error(ErrorKind::ConfigError, "'" + key + "' is not a number: " + text);
  return x;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace detail

/// Flat `key = value` configuration; `#` starts a comment.
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& is, std::filesystem::path base_dir = {}) {
    Config cfg;
    cfg.base_dir_ = std::move(base_dir);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto text = detail::trim(line);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
      }
      auto key = detail::trim(std::string_view(text).substr(0, eq));
      auto value = detail::trim(std::string_view(text).substr(eq + 1));
      if (key.empty()) throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": empty key");
      if (cfg.values_.count(key)) throw Error(ErrorKind::ConfigError, "duplicate key '" + key + "'");
      cfg.order_.push_back(key);
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static Config parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::ConfigError, "cannot open config " + path.string());
    return parse(is, path.parent_path());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorKind::ConfigError, "missing key '" + key + "'");
    used_[key] = true;
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) const { return has(key) ? str(key) : fallback; }

  double number(const std::string& key) const { return detail::to_double(key, str(key)); }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const double x = number(key);
    if (x != std::floor(x)) throw Error(ErrorKind::ConfigError, "'" + key + "' must be an integer");
    return static_cast<long>(x);
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& item : detail::split(str(key), ',')) out.push_back(detail::to_double(key, item));
    return out;
  }

  /// Resolves a path relative to the config file's directory.
  std::filesystem::path path(const std::string& text) const {
    std::filesystem::path p(text);
    return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
  }

  /// Keys in file order, for echoing into reports.
  std::vector<std::pair<std::string, std::string>> entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : order_) out.emplace_back(k, values_.at(k));
    return out;
  }

  /// Keys never read; catches typos.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& k : order_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  mutable std::map<std::string, bool> used_;
  std::filesystem::path base_dir_;
};

/// Parsed `name(k=v, ...)` data specification.
struct DataSpec {
  std::string name;
  std::map<std::string, std::string> args;

  static DataSpec parse(std::string_view text) {
    DataSpec spec;
    const auto s = detail::trim(text);
    const auto open = s.find('(');
    if (open == std::string::npos) {
      spec.name = s;
      return spec;
    }
    if (s.back() != ')') throw Error(ErrorKind::ConfigError, "unbalanced parentheses in data spec '" + s + "'");
    spec.name = detail::trim(std::string_view(s).substr(0, open));
    const auto inner = std::string_view(s).substr(open + 1, s.size() - open - 2);
    if (!detail::trim(inner).empty()) {
      for (const auto& item : detail::split(inner, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "expected k=v in data spec '" + s + "'");
        spec.args[detail::trim(std::string_view(item).substr(0, eq))] =
            detail::trim(std::string_view(item).substr(eq + 1));
      }
    }
    return spec;
  }

  double number(const std::string& key) const {
    auto it = args.find(key);
    if (it == args.end()) throw Error(ErrorKind::ConfigError, name + ": missing argument '" + key + "'");
    return detail::to_double(name + "." + key, it->second);
  }
  double number(const std::string& key, double fallback) const { return args.count(key) ? number(key) : fallback; }
};

/// Radius/value table (two whitespace-separated columns, `#` comments),
/// interpolated monotone-cubically and held constant beyond its ends.
inline MonotoneCubic read_profile_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::IoError, "cannot open profile table " + path.string());
  std::vector<double> x, y;
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double a = 0, b = 0;
    if (!(ls >> a)) continue;
    if (!(ls >> b)) throw Error(ErrorKind::ConfigError, "profile table rows need two columns");
    x.push_back(a);
    y.push_back(b);
  }
  if (x.size() < 2) throw Error(ErrorKind::ConfigError, "profile table needs at least two rows");
  return MonotoneCubic(std::move(x), std::move(y));
}

/// Builds cell averages of a named initial profile:
///   uniform-ball(r, a)              r on [0, a], 0 beyond
///   smoothed-ball(r, a, eps[, floor]) r on [0, a], floor (default eps) beyond
///                                     a + eps, C^2 blend in between
///   gaussian-like(amplitude, width[, base])  base + amplitude exp(-rho^2/(2 width^2))
///   table(path)                      radius/value file
inline RadialDensity build_initial_data(const DataSpec& spec, GridPtr grid, const Config& cfg = {}) {
  if (spec.name == "uniform-ball") {
    const double r = spec.number("r"), a = spec.number("a");
    if (!(r > 0) || !(a > 0)) throw Error(ErrorKind::ConfigError, "uniform-ball needs r > 0 and a > 0");
    const double ca = std::pow(a, grid->dim());
    std::vector<double> values(grid->cells());
    for (std::size_t i = 0; i < grid->cells(); ++i) {
      const double lo = grid->edge_pow(i), hi = grid->edge_pow(i + 1);
      values[i] = r * std::clamp((ca - lo) / (hi - lo), 0.0, 1.0);
    }
    return RadialDensity(std::move(grid), std::move(values));
  }
  if (spec.name == "smoothed-ball") {
    const double r = spec.number("r"), a = spec.number("a"), eps = spec.number("eps");
    const double floor = spec.number("floor", eps);
    if (!(r > 0) || !(a > 0) || !(eps > 0) || !(floor >= 0)) {
      throw Error(ErrorKind::ConfigError, "smoothed-ball needs r, a, eps > 0 and floor >= 0");
    }
    return RadialDensity::from_profile(grid, [=](double z) {
      return floor + (r - floor) * (1 - counterexample::detail::smoothstep((z - a) / eps));
    });
  }
  if (spec.name == "gaussian-like") {
    const double amp = spec.number("amplitude"), width = spec.number("width"), base = spec.number("base", 0.0);
    if (!(amp > 0) || !(width > 0) || !(base >= 0)) {
      throw Error(ErrorKind::ConfigError, "gaussian-like needs amplitude, width > 0 and base >= 0");
    }
    return RadialDensity::from_profile(grid, [=](double z) { return base + amp * std::exp(-z * z / (2 * width * width)); });
  }
  if (spec.name == "table") {
    auto it = spec.args.find("path");
    if (it == spec.args.end()) throw Error(ErrorKind::ConfigError, "table needs path=<file>");
    const auto table = read_profile_table(cfg.path(it->second));
    return RadialDensity::from_profile(grid, [&](double z) {
      return table(std::clamp(z, table.knots().front(), table.knots().back()));
    });
  }
  throw Error(ErrorKind::ConfigError, "unknown initial data '" + spec.name + "'");
}

inline GridPtr grid_from_config(const Config& cfg) {
  const long d = cfg.integer("d", 3);
  const double R = cfg.number("R", 1.0);
  const long N = cfg.integer("N", 400);
  if (d < 1 || d > 64) throw Error(ErrorKind::ConfigError, "d must lie in [1, 64]");
  if (!(R > 0)) throw Error(ErrorKind::ConfigError, "R must be positive");
  if (N < 2) throw Error(ErrorKind::ConfigError, "N must be >= 2");
  return make_grid(RadialGrid::uniform(static_cast<int>(d), R, static_cast<std::size_t>(N)));
}

inline Nonlinearity nonlinearity_from_config(const Config& cfg) {
  try {
    auto text = cfg.str("nonlinearity");
    if (text.rfind("table:", 0) == 0) text = "table:" + cfg.path(text.substr(6)).string();
    return Nonlinearity::parse(text);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    throw Error(ErrorKind::ConfigError, e.what());
  }
}

inline SolverConfig solver_from_config(const Config& cfg) {
  SolverConfig s;
  const auto scheme = cfg.str("scheme", "implicit");
  if (scheme == "implicit") s.scheme = Scheme::Implicit;
  else if (scheme == "explicit") s.scheme = Scheme::Explicit;
  else throw Error(ErrorKind::ConfigError, "scheme must be implicit or explicit");
  if (cfg.has("dt")) s.dt = cfg.number("dt");
  s.safety = cfg.number("safety", s.safety);
  s.t_end = cfg.number("t_end", 0.0);
  s.snapshots = cfg.numbers("snapshots", {});
  s.floor = cfg.number("floor", 0.0);
  s.newton_tol = cfg.number("newton_tol", s.newton_tol);
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return s;
}

struct RunOptions {
  std::filesystem::path out_dir = ".";
  unsigned workers = 1;
  std::uint64_t seed = 0;
  /// Progress and verdict lines; nullptr silences them.
  std::ostream* log = nullptr;
};

struct RunResult {
  int exit_code = kSuccess;
  std::string verdict;
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  return os;
}

inline void echo_config(std::ostream& os, const Config& cfg, const std::string& kind) {
  os << "experiment = " << kind << '\n' << "version = " << kVersion << '\n';
  for (const auto& [k, v] : cfg.entries()) os << "config." << k << " = " << v << '\n';
}

inline void say(const RunOptions& opt, const std::string& line) {
  if (opt.log) *opt.log << line << '\n';
}

inline std::string yes_no(bool b) { return b ? "holds" : "violated"; }

}  // namespace detail

/// Evaluates the three condition checkers for one or more dimensions and a
/// batch of random bracket-inequality tuples.
inline RunResult run_check(const Config& cfg, const RunOptions& opt) {
  const auto f = nonlinearity_from_config(cfg);
  std::vector<double> dims = cfg.numbers("dims", {static_cast<double>(cfg.integer("d", 3))});
  const double r_lo = cfg.number("r_min", 1e-6);
  const double r_hi = cfg.number("r_max", f.has_closed_form() ? 1e6 : f.r_max());
  const long samples = cfg.integer("samples", 400);
  const long bracket_samples = cfg.integer("bracket_samples", 1000);
  if (!(r_lo > 0 && r_hi > r_lo) || samples < 3) throw Error(ErrorKind::ConfigError, "bad sampling range");
  const auto grid = log_grid(r_lo, r_hi, static_cast<std::size_t>(samples));

  auto os = detail::open_output(opt.out_dir / "check.csv");
  os << "d,nonlinearity,threshold,mccann,monotone,psi_convexity,agree,worst_r,worst_margin,bracket_samples,bracket_"
        "violations\n";
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RunResult result;
  bool all_agree = true;
  for (double dd : dims) {
    if (dd != std::floor(dd) || dd < 1) throw Error(ErrorKind::ConfigError, "dims must be positive integers");
    const int d = static_cast<int>(dd);
    const auto c2 = mccann_holds(f, d, grid);
    const auto c3 = condition3_monotone(f, d, grid);
    const auto cp = psi_entropy_convexity(f, d, grid);
    const bool agree = c2.holds == c3.holds && c3.holds == cp.holds;
    all_agree = all_agree && agree;
    // The reduced bound is nonnegative for all (r, p >= 1) iff the condition holds;
    // value >= reduced_bound always.
    long violations = 0;
    for (long k = 0; k < bracket_samples; ++k) {
      const double r = std::exp(std::log(r_lo) + unit(rng) * (std::log(r_hi) - std::log(r_lo)));
      const double p = 1 + 4 * unit(rng);
      const double s = p * (1 + unit(rng));
      const double S = 1 / p + 2 * unit(rng);
      const auto b = bracket_inequality(f, d, r, p, s, S);
      const double scale = 1e-12 * (std::abs(b.value) + std::abs(b.reduced_bound) + f.f(r));
      if (b.value < b.reduced_bound - scale) ++violations;
      if (c2.holds && b.reduced_bound < -scale) ++violations;
    }
    if (violations) all_agree = false;
    const auto m = f.exponent();
    os << d << ',' << f.describe() << ',' << (m ? format_double(power_threshold(d)) : std::string("nan")) << ','
       << detail::yes_no(c2.holds) << ',' << detail::yes_no(c3.holds) << ',' << detail::yes_no(cp.holds) << ','
       << (agree ? "yes" : "no") << ',' << format_double(c2.worst_r) << ',' << format_double(c2.worst_margin) << ','
       << bracket_samples << ',' << violations << '\n';
    std::ostringstream line;
    line << "d=" << d << " " << f.describe() << ": condition " << detail::yes_no(c2.holds)
         << ", worst margin " << format_double(c2.worst_margin) << " at r=" << format_double(c2.worst_r);
    if (m) line << ", threshold 1-1/d = " << format_double(power_threshold(d));
    detail::say(opt, line.str());
    result.verdict = detail::yes_no(c2.holds);
  }
  if (dims.size() > 1) result.verdict = all_agree ? "agree" : "disagree";
  if (!all_agree) result.exit_code = kVerdictMismatch;
  return result;
}

/// Evolves one initial datum, writing snapshot density files and a manifest.
inline RunResult run_solve(const Config& cfg, const RunOptions& opt) {
  const auto f = nonlinearity_from_config(cfg);
  const auto grid = grid_from_config(cfg);
  auto solver_cfg = solver_from_config(cfg);
  auto u0 = build_initial_data(DataSpec::parse(cfg.str("initial")), grid, cfg);
  if (cfg.has("mass")) u0 = u0.with_mass(cfg.number("mass"));
  const DiffusionSolver solver(grid, f, solver_cfg);
  const auto snaps = solver.evolve(u0);
  auto manifest = detail::open_output(opt.out_dir / "manifest.csv");
  manifest << "index,t,file,mass,min,max,entropy\n";
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%04zu.dat", k);
    write_density((opt.out_dir / name).string(), snaps[k].u);
    manifest << k << ',' << format_double(snaps[k].t) << ',' << name << ',' << format_double(snaps[k].u.mass()) << ','
             << format_double(snaps[k].u.min()) << ',' << format_double(snaps[k].u.max()) << ','
             << format_double(entropy(snaps[k].u, f)) << '\n';
  }
  auto summary = detail::open_output(opt.out_dir / "summary.txt");
  detail::echo_config(summary, cfg, "solve");
  summary << "snapshots = " << snaps.size() << '\n'
          << "mass_initial = " << format_double(snaps.front().u.mass()) << '\n'
          << "mass_final = " << format_double(snaps.back().u.mass()) << '\n';
  detail::say(opt, "solve: " + std::to_string(snaps.size()) + " snapshots written");
  return {kSuccess, "done"};
}

inline counterexample::Spec counterexample_from_config(const Config& cfg) {
  counterexample::Spec s;
  s.d = static_cast<int>(cfg.integer("d", s.d));
  s.r = cfg.number("r", s.r);
  s.a = cfg.number("a", s.a);
  s.delta = cfg.number("delta", s.delta);
  s.R = cfg.number("R", std::max(s.R, s.a * (1 + 2 * s.delta) + 0.5 * s.a));
  s.eps = cfg.number("eps", std::min(s.eps, s.eps0()));
  s.cells = static_cast<std::size_t>(cfg.integer("cells", static_cast<long>(s.cells)));
  s.cells_per_eps = cfg.number("cells_per_eps", s.cells_per_eps);
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return s;
}

namespace detail {

inline CoEvolveOptions coevolve_options(const Config& cfg, const SolverConfig& solver_cfg) {
  CoEvolveOptions o;
  o.t_end = solver_cfg.t_end;
  o.w2_tolerance = cfg.number("w2_tolerance", o.w2_tolerance);
  o.entropy_tolerance = cfg.number("entropy_tolerance", o.entropy_tolerance);
  o.record_dissipation = cfg.str("record_dissipation", "yes") == "yes";
  o.record_every = static_cast<std::size_t>(std::max(1L, cfg.integer("record_every", 1)));
  if (cfg.has("max_dt")) o.max_dt = cfg.number("max_dt");
  return o;
}

inline void write_report(const ExperimentReport& rep, const Config& cfg, const std::string& kind,
                         const RunOptions& opt) {
  auto csv = open_output(opt.out_dir / "report.csv");
  rep.write_csv(csv);
  auto summary = open_output(opt.out_dir / "summary.txt");
  echo_config(summary, cfg, kind);
  summary << "w2_tolerance_per_step = relative to W2(0)\n";
  rep.write_summary(summary);
}

}  // namespace detail

/// Co-evolves two data; `pair = counterexample` uses the smoothed
/// concentric-ball construction instead of `initial_u` / `initial_v`.
inline RunResult run_contract(const Config& cfg, const RunOptions& opt) {
  const auto f = nonlinearity_from_config(cfg);
  const auto solver_cfg = solver_from_config(cfg);
  const auto co = detail::coevolve_options(cfg, solver_cfg);
  ExperimentReport rep;
  if (cfg.str("pair", "data") == "counterexample") {
    rep = counterexample::contraction_violation_experiment(counterexample_from_config(cfg), f, solver_cfg, co);
  } else {
    const auto grid = grid_from_config(cfg);
    auto u0 = build_initial_data(DataSpec::parse(cfg.str("initial_u")), grid, cfg);
    auto v0 = build_initial_data(DataSpec::parse(cfg.str("initial_v")), grid, cfg);
    const double target = cfg.number("mass", u0.mass());
    u0 = u0.with_mass(target);
    v0 = v0.with_mass(target);
    rep = co_evolve(u0, v0, f, solver_cfg, co);
    rep.metadata.emplace_back("nonlinearity", f.describe());
    rep.metadata.emplace_back("target_mass", format_double(target));
  }
  detail::write_report(rep, cfg, "contract", opt);
  detail::say(opt, "contract: " + rep.verdict + ", max relative W2 increase " + format_double(rep.max_relative_increase) +
                       ", D(0) = " + format_double(rep.initial_dissipation));
  return {kSuccess, rep.verdict};
}

/// I1 + I2 over a decreasing eps sequence, its extrapolation, and optionally
/// the co-evolved pair at the smallest eps.
inline RunResult run_counterexample(const Config& cfg, const RunOptions& opt) {
  const auto f = nonlinearity_from_config(cfg);
  auto spec = counterexample_from_config(cfg);
  const auto eps = cfg.numbers("eps_values", {1e-2 * spec.a, 3e-3 * spec.a, 1e-3 * spec.a, 3e-4 * spec.a});
  for (double e : eps) {
    auto probe = spec;
    probe.eps = e;
    try {
      probe.validate();
    } catch (const Error& err) {
      throw Error(ErrorKind::ConfigError, err.what());
    }
  }
  const auto study = counterexample::convergence_study(spec, f, eps);
  auto csv = detail::open_output(opt.out_dir / "counterexample.csv");
  counterexample::write_sweep_csv(csv, study.rows);
  auto summary = detail::open_output(opt.out_dir / "summary.txt");
  detail::echo_config(summary, cfg, "counterexample");
  summary << "extrapolated_I1_plus_I2 = " << format_double(study.extrapolated) << '\n'
          << "limit_sphere_area_form = " << format_double(study.limit) << '\n'
          << "limit_ball_volume_form = " << format_double(study.limit_ball_volume_form) << '\n'
          << "observed_order = " << (study.observed_order ? format_double(*study.observed_order) : "nan") << '\n'
          << "w2_sq_limit = " << format_double(study.w2_limit_sq) << '\n';
  std::string verdict = study.extrapolated > 0 ? "positive-limit" : "nonpositive-limit";
  const double t_end = cfg.number("t_end", 0.0);
  if (t_end > 0) {
    spec.eps = eps.back();
    const auto solver_cfg = solver_from_config(cfg);
    const auto rep =
        counterexample::contraction_violation_experiment(spec, f, solver_cfg, detail::coevolve_options(cfg, solver_cfg));
    auto report = detail::open_output(opt.out_dir / "report.csv");
    rep.write_csv(report);
    summary << "coevolution_verdict = " << rep.verdict << '\n'
            << "initial_dissipation = " << format_double(rep.initial_dissipation) << '\n';
    verdict += ", " + rep.verdict;
  }
  summary << "verdict = " << verdict << '\n';
  detail::say(opt, "counterexample: extrapolated I1+I2 = " + format_double(study.extrapolated) +
                       ", closed form = " + format_double(study.limit) + " (" + verdict + ")");
  return {kSuccess, verdict};
}

/// Entropy along the displacement interpolant between two data.
inline RunResult run_geodesic(const Config& cfg, const RunOptions& opt) {
  const auto f = nonlinearity_from_config(cfg);
  const auto grid = grid_from_config(cfg);
  auto u0 = build_initial_data(DataSpec::parse(cfg.str("initial_u")), grid, cfg);
  auto u1 = build_initial_data(DataSpec::parse(cfg.str("initial_v")), grid, cfg);
  const double target = cfg.number("mass", u0.mass());
  u0 = u0.with_mass(target);
  u1 = u1.with_mass(target);
  const long steps = cfg.integer("steps", 20);
  if (steps < 2) throw Error(ErrorKind::ConfigError, "steps must be >= 2");
  const double tol = cfg.number("convexity_tolerance", 1e-8);
  const auto scan = geodesic_convexity_scan(u0, u1, f, uniform_times(static_cast<std::size_t>(steps)));
  auto csv = detail::open_output(opt.out_dir / "geodesic.csv");
  csv << "t,entropy\n";
  for (std::size_t i = 0; i < scan.t.size(); ++i) csv << format_double(scan.t[i]) << ',' << format_double(scan.entropy[i]) << '\n';
  const bool convex = scan.min_second_difference >= -tol * scan.scale;
  const std::string verdict = convex ? "convex" : "nonconvex";
  auto summary = detail::open_output(opt.out_dir / "summary.txt");
  detail::echo_config(summary, cfg, "geodesic");
  summary << "min_second_difference = " << format_double(scan.min_second_difference) << '\n'
          << "argmin_t = " << format_double(scan.argmin_t) << '\n'
          << "scale = " << format_double(scan.scale) << '\n'
          << "verdict = " << verdict << '\n';
  detail::say(opt, "geodesic: " + verdict + ", min second difference " + format_double(scan.min_second_difference));
  return {kSuccess, verdict};
}

struct SweepCell {
  int d = 0;
  double m = 0;
  std::string condition;    ///< holds / violated
  std::string contraction;  ///< contractive / non-contractive / error
  bool marginal = false;
  double initial_dissipation = std::numeric_limits<double>::quiet_NaN();
  double integrals_sum = std::numeric_limits<double>::quiet_NaN();
  double limit = std::numeric_limits<double>::quiet_NaN();
  double max_relative_increase = std::numeric_limits<double>::quiet_NaN();
  std::string error;

  /// Agreement is asserted only off the marginal band and without errors.
  std::string agreement() const {
    if (!error.empty()) return "error";
    if (marginal) return "marginal";
    return (condition == "holds") == (contraction == "contractive") ? "yes" : "no";
  }
};

struct SweepSettings {
  std::vector<int> dims{1, 2, 3};
  std::vector<double> exponents;
  counterexample::Spec geometry;
  std::size_t steps = 20;
  double marginal_band = 1e-3;
  double w2_tolerance = 1e-8;
};

inline SweepSettings sweep_from_config(const Config& cfg) {
  SweepSettings s;
  s.dims.clear();
  for (double d : cfg.numbers("dims", {1, 2, 3})) {
    if (d != std::floor(d) || d < 1) throw Error(ErrorKind::ConfigError, "dims must be positive integers");
    s.dims.push_back(static_cast<int>(d));
  }
  const double lo = cfg.number("m_min", 0.3), hi = cfg.number("m_max", 2.0), step = cfg.number("m_step", 0.1);
  if (!(lo > 0 && hi >= lo && step > 0)) throw Error(ErrorKind::ConfigError, "bad exponent range");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= count; ++k) s.exponents.push_back(std::round((lo + k * step) * 1e12) / 1e12);
  auto& g = s.geometry;
  g.r = cfg.number("r", 1.0);
  g.a = cfg.number("a", 1.0);
  g.delta = cfg.number("delta", 0.25);
  g.R = cfg.number("R", g.a * (1 + 2 * g.delta) + 0.5 * g.a);
  g.eps = cfg.number("eps", 1e-4 * g.a);
  g.cells = static_cast<std::size_t>(cfg.integer("cells", static_cast<long>(g.cells)));
  g.cells_per_eps = cfg.number("cells_per_eps", g.cells_per_eps);
  s.steps = static_cast<std::size_t>(cfg.integer("steps", 20));
  s.marginal_band = cfg.number("marginal_band", s.marginal_band);
  s.w2_tolerance = cfg.number("w2_tolerance", s.w2_tolerance);
  for (int d : s.dims) {
    auto probe = g;
    probe.d = d;
    try {
      probe.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, e.what());
    }
  }
  if (s.steps < 1) throw Error(ErrorKind::ConfigError, "steps must be >= 1");
  return s;
}

/// One sweep cell: condition verdict for the power law, and the contraction
/// verdict of the co-evolved counterexample pair over `steps` implicit steps.
inline SweepCell run_sweep_cell(int d, double m, const SweepSettings& s, const std::filesystem::path& cell_file) {
  SweepCell cell;
  cell.d = d;
  cell.m = m;
  const auto f = Nonlinearity::power(m);
  const std::vector<double> probe{s.geometry.r};
  cell.condition = detail::yes_no(mccann_holds(f, d, probe).holds);
  cell.marginal = std::abs(m - power_threshold(d)) < s.marginal_band;
  try {
    auto spec = s.geometry;
    spec.d = d;
    auto [u0, v0] = counterexample::build_mollified_data(spec);
    const DiffusionSolver solver(u0.grid_ptr(), f, SolverConfig{});
    const double dt = solver.default_dt(u0);
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.t_end = dt * static_cast<double>(s.steps);
    CoEvolveOptions co;
    co.t_end = cfg.t_end;
    co.w2_tolerance = s.w2_tolerance;
    co.record_dissipation = false;
    auto rep = co_evolve(u0, v0, f, cfg, co);
    rep.initial_dissipation = dissipation(u0, v0, f).dissipation;
    cell.initial_dissipation = rep.initial_dissipation;
    cell.contraction = rep.verdict;
    cell.max_relative_increase = rep.max_relative_increase;
    cell.integrals_sum = counterexample::dissipation_integrals(spec, f).sum();
    cell.limit = counterexample::dissipation_limit(f, d, spec.r, spec.a, spec.delta);
    auto os = detail::open_output(cell_file);
    rep.write_csv(os);
  } catch (const std::exception& e) {
    cell.contraction = "error";
    cell.error = e.what();
  }
  return cell;
}

inline void write_sweep_summary(std::ostream& os, const std::vector<SweepCell>& cells) {
  os << "d,m,threshold,condition,contraction,agreement,D0,I1_plus_I2,limit_formula,max_rel_w2_increase\n";
  for (const auto& c : cells) {
    os << c.d << ',' << format_double(c.m) << ',' << format_double(power_threshold(c.d)) << ',' << c.condition << ','
       << c.contraction << ',' << c.agreement() << ',' << format_double(c.initial_dissipation) << ','
       << format_double(c.integrals_sum) << ',' << format_double(c.limit) << ','
       << format_double(c.max_relative_increase) << '\n';
  }
}

/// Grid over (d, m) of power laws; cells run on `workers` threads and each
/// writes its own trace, the summary is assembled afterwards in grid order.
inline RunResult run_sweep(const Config& cfg, const RunOptions& opt) {
  const auto s = sweep_from_config(cfg);
  std::vector<std::pair<int, double>> jobs;
  for (int d : s.dims) {
    for (double m : s.exponents) jobs.emplace_back(d, m);
  }
  std::vector<SweepCell> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const auto [d, m] = jobs[k];
      char name[64];
      std::snprintf(name, sizeof name, "cells/d%d_m%.3f.csv", d, m);
      cells[k] = run_sweep_cell(d, m, s, opt.out_dir / name);
      if (opt.log) {
        std::lock_guard lock(log_mutex);
        *opt.log << "sweep d=" << d << " m=" << format_double(m) << ": condition " << cells[k].condition
                 << ", " << cells[k].contraction << " [" << cells[k].agreement() << "]\n";
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  auto os = detail::open_output(opt.out_dir / "sweep.csv");
  write_sweep_summary(os, cells);
  bool mismatch = false, failed = false;
  for (const auto& c : cells) {
    mismatch = mismatch || c.agreement() == "no";
    failed = failed || !c.error.empty();
  }
  RunResult r;
  r.verdict = mismatch ? "mismatch" : failed ? "failed" : "equivalent";
  r.exit_code = mismatch ? kVerdictMismatch : failed ? kNumericalFailure : kSuccess;
  detail::say(opt, "sweep: " + r.verdict);
  return r;
}

}  // namespace wcontract::harness
