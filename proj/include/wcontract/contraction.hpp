#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "wcontract/diffusion_solver.hpp"
#include "wcontract/radial_measure.hpp"
#include "wcontract/transport_entropy.hpp"

namespace wcontract {

/// Formats a double as decimal scientific with 15 significant digits.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.14e", x);
  return buf;
}

struct ReportRow {
  double t = 0;
  double w2 = 0;
  double w2_sq = 0;
  double entropy_u = 0;
  double entropy_v = 0;
  double mass_u = 0;
  double mass_v = 0;
  double dissipation = std::numeric_limits<double>::quiet_NaN();
};

/// Time series of a paired run plus the derived verdicts.
struct ExperimentReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ReportRow> rows;
  bool contractive = true;
  bool entropy_monotone = true;
  /// Largest one-step increase of W2 divided by W2(0).
  double max_relative_increase = 0;
  std::optional<double> first_increase_time;
  double initial_dissipation = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;

  void write_csv(std::ostream& os) const {
    os << "t,W2,W2_sq,U_u,U_v,mass_u,mass_v,D\n";
    for (const auto& r : rows) {
      os << format_double(r.t) << ',' << format_double(r.w2) << ',' << format_double(r.w2_sq) << ','
         << format_double(r.entropy_u) << ',' << format_double(r.entropy_v) << ',' << format_double(r.mass_u) << ','
         << format_double(r.mass_v) << ',' << format_double(r.dissipation) << '\n';
    }
  }

  void write_summary(std::ostream& os) const {
    for (const auto& [k, v] : metadata) os << k << " = " << v << '\n';
    os << "max_relative_w2_increase = " << format_double(max_relative_increase) << '\n';
    os << "initial_dissipation = " << format_double(initial_dissipation) << '\n';
    if (first_increase_time) os << "first_w2_increase_t = " << format_double(*first_increase_time) << '\n';
    os << "entropy_monotone = " << (entropy_monotone ? "yes" : "no") << '\n';
    os << "verdict = " << verdict << '\n';
  }
};

struct CoEvolveOptions {
  double t_end = 0;
  /// Per-step W2 increase tolerated, relative to W2(0).
  double w2_tolerance = 1e-8;
  /// Per-step entropy increase tolerated, relative to |U(0)|.
  double entropy_tolerance = 1e-10;
  /// Record dissipation on every recorded row (needs positive densities).
  bool record_dissipation = true;
  /// Keep every k-th step in the report rows (verdicts use every step).
  std::size_t record_every = 1;
  /// Optional cap on the common step size.
  std::optional<double> max_dt;
};

/// Evolves u and v with the same steps and tracks W2, entropies and masses.
inline ExperimentReport co_evolve(const RadialDensity& u0, const RadialDensity& v0, const Nonlinearity& f,
                                  const SolverConfig& cfg, const CoEvolveOptions& opt) {
  const DiffusionSolver su(u0.grid_ptr(), f, cfg);
  const DiffusionSolver sv(v0.grid_ptr(), f, cfg);
  su.check_data(u0);
  sv.check_data(v0);

  auto positive = [](const RadialDensity& x) { return x.min() > 0; };
  auto make_row = [&](double t, const RadialDensity& u, const RadialDensity& v, bool with_d) {
    ReportRow row;
    row.t = t;
    const auto w = w2_radial(u, v, 1);
    row.w2 = w.w2;
    row.w2_sq = w.w2_sq;
    row.entropy_u = entropy(u, f);
    row.entropy_v = entropy(v, f);
    row.mass_u = u.mass();
    row.mass_v = v.mass();
    if (with_d && opt.record_dissipation && positive(u) && positive(v)) row.dissipation = dissipation(u, v, f).dissipation;
    return row;
  };

  ExperimentReport rep;
  SolverState a{0.0, u0, {}};
  SolverState b{0.0, v0, {}};
  auto prev = make_row(0.0, u0, v0, true);
  rep.rows.push_back(prev);
  rep.initial_dissipation = prev.dissipation;
  const double w0 = prev.w2;
  const double e0 = std::max(std::abs(prev.entropy_u), std::abs(prev.entropy_v));
  std::size_t n = 0;
  while (a.t < opt.t_end) {
    double dt = std::min(su.default_dt(a.u), sv.default_dt(b.u));
    if (opt.max_dt) dt = std::min(dt, *opt.max_dt);
    if (dt >= (opt.t_end - a.t) * (1 - 1e-12)) dt = opt.t_end - a.t;
    a = su.advance(a, dt);
    b = sv.advance(b, dt);
    b.t = a.t;
    ++n;
    const bool keep = n % opt.record_every == 0 || a.t >= opt.t_end;
    auto row = make_row(a.t, a.u, b.u, keep);
    const double inc = row.w2 - prev.w2;
    if (w0 > 0) rep.max_relative_increase = std::max(rep.max_relative_increase, inc / w0);
    if (inc > opt.w2_tolerance * w0) {
      rep.contractive = false;
      if (!rep.first_increase_time) rep.first_increase_time = row.t;
    }
    if (row.entropy_u - prev.entropy_u > opt.entropy_tolerance * e0 ||
        row.entropy_v - prev.entropy_v > opt.entropy_tolerance * e0) {
      rep.entropy_monotone = false;
    }
    if (keep) rep.rows.push_back(row);
    prev = row;
  }
  rep.verdict = rep.contractive ? "contractive" : "non-contractive";
  return rep;
}

}  // namespace wcontract
