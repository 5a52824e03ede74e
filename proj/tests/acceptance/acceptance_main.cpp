// Acceptance checks, one per criterion.  Usage:
//   acceptance [--criterion N] [--cli <path to wcontract_cli>]
// Prints one PASS/FAIL line per criterion; exit status is nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "../oracles.hpp"
#include "wcontract/wcontract.hpp"

using namespace wcontract;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string g(double x) { return fmt("%.6g", x); }

std::string cli_path;

RadialDensity smooth_pair_member(GridPtr grid, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double base = 0.05 + 0.2 * u(rng), amp = 0.5 + u(rng), width = 0.1 + 0.3 * u(rng), shift = 0.4 * u(rng);
  return RadialDensity::from_profile(grid, [=](double z) {
    const double x = (z - shift) / width;
    return base + amp * std::exp(-x * x / 2);
  });
}

// 1 --------------------------------------------------------------------------
Outcome condition_threshold() {
  Outcome o;
  const auto grid = log_grid(1e-6, 1e6, 400);
  for (int d : {1, 2, 3, 5, 10}) {
    const double th = power_threshold(d);
    const bool above = mccann_holds(Nonlinearity::power(th + 1e-3), d, grid).holds;
    const bool at = mccann_holds(Nonlinearity::power(th > 0 ? th : 1e-12), d, grid).holds;
    bool below = false;
    if (th - 1e-3 > 0) below = mccann_holds(Nonlinearity::power(th - 1e-3), d, grid).holds;
    const bool ok = above && at && !below;
    o.pass = o.pass && ok;
    o.detail += "d=" + std::to_string(d) + (ok ? " flips " : " WRONG ");
  }
  o.detail += "(d=1: threshold 0, only m > 0 exists)";
  return o;
}

// 2 --------------------------------------------------------------------------
Outcome checker_agreement() {
  Outcome o;
  const auto grid = log_grid(1e-6, 1e6, 400);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> m_dist(0.05, 3.0);
  std::vector<Nonlinearity> family{Nonlinearity::linear()};
  for (int k = 0; k < 50; ++k) family.push_back(Nonlinearity::power(m_dist(rng)));
  int disagreements = 0, checked = 0;
  for (const auto& f : family) {
    for (int d : {1, 2, 3, 5, 10}) {
      const bool a = mccann_holds(f, d, grid).holds;
      const bool b = condition3_monotone(f, d, grid).holds;
      const bool c = psi_entropy_convexity(f, d, grid).holds;
      ++checked;
      if (a != b || b != c) ++disagreements;
    }
  }
  o.pass = disagreements == 0;
  o.detail = std::to_string(checked) + " (family, d) cases, " + std::to_string(disagreements) + " disagreements";
  return o;
}

// 3 --------------------------------------------------------------------------
Outcome w2_closed_forms() {
  Outcome o;
  double worst = 0;
  for (int d : {1, 2, 3, 5}) {
    const auto grid = make_grid(RadialGrid::uniform(d, 2.0, 10000));
    auto ball = [&](double a) {
      return harness::build_initial_data(harness::DataSpec::parse("uniform-ball(r=1, a=" + g(a) + ")"), grid);
    };
    const double M = 1.7;
    const auto u = ball(1.0).with_mass(M), v = ball(2.0).with_mass(M);
    const double expected = d / (d + 2.0) * 1.0 * M;
    worst = std::max(worst, std::abs(w2_radial(u, v).w2_sq / expected - 1));
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  const auto grid = make_grid(RadialGrid::uniform(3, 1.0, 64));
  auto random_density = [&] {
    std::vector<double> v(grid->cells());
    for (auto& x : v) x = unit(rng);
    return RadialDensity(grid, v).with_mass(1.0);
  };
  int axiom_failures = 0;
  for (int k = 0; k < 100; ++k) {
    const auto a = random_density(), b = random_density(), c = random_density();
    const double ab = w2_radial(a, b).w2, ba = w2_radial(b, a).w2, bc = w2_radial(b, c).w2, ac = w2_radial(a, c).w2;
    if (std::abs(ab - ba) > 1e-12 * ab || ac > ab + bc + 1e-10 || !(ab > 0) || w2_radial(a, a).w2 != 0) ++axiom_failures;
  }
  o.pass = worst <= 1e-6 && axiom_failures == 0;
  o.detail = "max relative error vs (d/(d+2))(b-a)^2 M at N=1e4: " + g(worst) + "; metric-axiom failures on 100 triples: " +
             std::to_string(axiom_failures);
  return o;
}

// 4 --------------------------------------------------------------------------
Outcome solver_validation() {
  Outcome o;
  const oracle::Barenblatt B{3, 2.0, 1.0};
  const auto grid = make_grid(RadialGrid::uniform(3, 6.0, 2000));
  const auto f = Nonlinearity::power(2);
  const auto u0 = RadialDensity::from_profile(grid, [&](double z) { return B(1.0, z); });
  SolverConfig cfg;
  cfg.t_end = 1.0;
  for (int k = 1; k <= 10; ++k) cfg.snapshots.push_back(0.1 * k);
  cfg.snapshots.back() = 1.0;
  const DiffusionSolver solver(grid, f, cfg);
  const double M = u0.mass(), hi = u0.max();
  double mass_drift = 0, max_excess = 0;
  const auto snaps = solver.evolve(u0, [&](const SolverState& s) {
    mass_drift = std::max(mass_drift, std::abs(s.u.mass() / M - 1));
    max_excess = std::max({max_excess, s.u.max() - hi, -s.u.min()});
  });
  double worst_l1 = 0;
  for (const auto& s : snaps) {
    const auto ref = RadialDensity::from_profile(grid, [&](double z) { return B(1.0 + s.t, z); });
    double err = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) err += std::abs(s.u[i] - ref[i]) * grid->volume(i);
    worst_l1 = std::max(worst_l1, err / ref.mass());
  }
  // Neumann run with strictly positive data (support reaches the wall).
  const auto g2 = make_grid(RadialGrid::uniform(3, 1.0, 400));
  const auto w0 = RadialDensity::from_profile(g2, [](double z) { return 0.1 + std::exp(-z * z / 0.05); });
  SolverConfig c2;
  c2.t_end = 0.2;
  const DiffusionSolver s2(g2, Nonlinearity::power(0.7), c2);
  const double lo2 = w0.min(), hi2 = w0.max();
  double neumann_excess = 0;
  s2.evolve(w0, [&](const SolverState& s) {
    neumann_excess = std::max({neumann_excess, s.u.max() - hi2, lo2 - s.u.min()});
    mass_drift = std::max(mass_drift, std::abs(s.u.mass() / w0.mass() - 1));
  });
  o.pass = worst_l1 <= 1e-2 && mass_drift <= 1e-12 && max_excess <= 1e-8 * hi && neumann_excess <= 1e-8 * hi2;
  o.detail = "max relative L1 vs Barenblatt over t in [1,2]: " + g(worst_l1) + "; mass drift " + g(mass_drift) +
             "; max-principle excess " + g(std::max(max_excess / hi, neumann_excess / hi2)) + " (relative)";
  return o;
}

// 5 --------------------------------------------------------------------------
Outcome contraction_sufficiency() {
  Outcome o;
  const auto grid = make_grid(RadialGrid::uniform(3, 1.0, 200));
  std::mt19937_64 rng(5);
  int runs = 0, failures = 0;
  double worst_increase = 0;
  for (double m : {0.7, 1.0, 2.0}) {
    const auto f = Nonlinearity::power(m);
    for (int k = 0; k < 5; ++k) {
      const auto u0 = smooth_pair_member(grid, rng);
      const auto v0 = smooth_pair_member(grid, rng).with_mass(u0.mass());
      SolverConfig cfg;
      cfg.t_end = 0.5;
      CoEvolveOptions opt;
      opt.t_end = 0.5;
      opt.record_dissipation = false;
      const auto rep = co_evolve(u0, v0, f, cfg, opt);
      ++runs;
      worst_increase = std::max(worst_increase, rep.max_relative_increase);
      if (!rep.contractive || !rep.entropy_monotone) ++failures;
    }
  }
  o.pass = failures == 0;
  o.detail = std::to_string(runs) + " pairs over t in [0,0.5], " + std::to_string(failures) +
             " failures; max per-step W2 increase / W2(0) = " + g(worst_increase);
  return o;
}

// 6 --------------------------------------------------------------------------
Outcome dissipation_identity() {
  Outcome o;
  const auto grid = make_grid(RadialGrid::uniform(3, 1.0, 1600));
  const auto f = Nonlinearity::power(2);
  auto u = RadialDensity::from_profile(grid, [](double z) { return 0.2 + std::exp(-z * z / 0.1); });
  auto v = RadialDensity::from_profile(grid, [](double z) { return 0.1 + 0.8 * std::exp(-(z - 0.4) * (z - 0.4) / 0.05); })
               .with_mass(u.mass());
  SolverConfig cfg;
  cfg.dt = 1e-6;
  const DiffusionSolver solver(grid, f, cfg);
  const double h = 10 * *cfg.dt;
  // Advance to t0, then record W2^2 at t0 - h, t0, t0 + h.
  SolverState a{0, u, {}}, b{0, v, {}};
  auto advance_both = [&](int steps) {
    for (int k = 0; k < steps; ++k) {
      a = solver.step(a);
      b = solver.step(b);
    }
  };
  advance_both(100);
  const double w_minus = w2_radial(a.u, b.u).w2_sq;
  advance_both(10);
  const auto mid = dissipation(a.u, b.u, f);
  advance_both(10);
  const double w_plus = w2_radial(a.u, b.u).w2_sq;
  const double fd = 0.5 * (w_plus - w_minus) / (2 * h);
  const double err = std::abs(fd - mid.dissipation);
  o.pass = err <= 1e-3 * std::abs(mid.dissipation) + 1e-10;
  o.detail = "N=1600, dt=1e-6, h=10 dt: (1/2) dW2^2/dt = " + g(fd) + ", D = " + g(mid.dissipation) + ", relative gap " +
             g(err / std::abs(mid.dissipation));
  return o;
}

// 7 --------------------------------------------------------------------------
Outcome counterexample_necessity() {
  Outcome o;
  counterexample::Spec s;
  s.d = 3;
  s.r = 1;
  s.a = 1;
  s.delta = 0.1;
  s.R = 1.5;
  const std::vector<double> eps{1e-2, 3e-3, 1e-3, 3e-4};
  const auto f = Nonlinearity::power(0.4);
  const auto study = counterexample::convergence_study(s, f, eps);
  const double literal = study.limit_ball_volume_form;  // delta a^3 c_3 [...]
  const double sphere = study.limit;                    // delta a^3 (3 c_3) [...]
  const bool literal_ok = std::abs(study.extrapolated / literal - 1) <= 2e-2;
  const bool positive = study.extrapolated > 0 && literal > 0;

  s.eps = 1e-3;
  CoEvolveOptions opt;
  opt.t_end = 4e-6;
  opt.record_dissipation = false;
  const auto bad = counterexample::contraction_violation_experiment(s, f, SolverConfig{}, opt);
  const auto g2 = Nonlinearity::power(2.0);
  s.eps = 3e-4;
  const auto control_study = counterexample::convergence_study(s, g2, eps);
  s.eps = 1e-3;
  const auto good = counterexample::contraction_violation_experiment(s, g2, SolverConfig{}, opt);
  const bool control_ok = control_study.extrapolated <= 0 && control_study.limit_ball_volume_form <= 0 && good.contractive;

  o.pass = literal_ok && positive && bad.initial_dissipation > 0 && control_ok;
  o.detail = "m=0.4: extrapolated I1+I2 = " + g(study.extrapolated) + " vs delta a^3 c_3[...] = " + g(literal) +
             " (ratio " + g(study.extrapolated / literal) + ", needs 1 +- 0.02); vs delta a^3 |S^2| [...] = " +
             g(sphere) + " (ratio " + g(study.extrapolated / sphere) + "); D(0) = " + g(bad.initial_dissipation) +
             ", pair " + bad.verdict + "; control m=2: limit " + g(control_study.extrapolated) + ", D(0) = " +
             g(good.initial_dissipation) + ", pair " + good.verdict;
  return o;
}

// 8 --------------------------------------------------------------------------
Outcome taylor_consistency() {
  Outcome o;
  double worst = 0;
  for (double m : {0.4, 0.7, 1.0, 2.0}) {
    const auto f = Nonlinearity::power(m);
    for (int d : {2, 3}) {
      for (double r : {0.5, 1.0, 2.0}) {
        const double target = (d - 1) * f.f(r) - d * r * f.fprime(r);
        worst = std::max(worst, std::abs(counterexample::rescaled_limit_bracket(f, d, r, 1e-5) / target - 1));
      }
    }
  }
  const auto f = Nonlinearity::table({0.125, 0.25, 0.5, 1, 2, 4, 8}, {0.015625, 0.0625, 0.25, 1, 4, 16, 64});  // samples of r^2
  for (int d : {2, 3}) {
    for (double r : {0.5, 1.0, 2.0}) {
      const double target = (d - 1) * f.f(r) - d * r * f.fprime(r);
      worst = std::max(worst, std::abs(counterexample::rescaled_limit_bracket(f, d, r, 1e-5) / target - 1));
    }
  }
  o.pass = worst <= 1e-3;
  o.detail = "delta=1e-5, d in {2,3}, r in {0.5,1,2}, power m in {0.4,0.7,1,2} and a tabulated f: max relative gap " +
             g(worst);
  return o;
}

// 9 --------------------------------------------------------------------------
Outcome geodesic_convexity() {
  Outcome o;
  const auto grid = make_grid(RadialGrid::uniform(3, 2.0, 800));
  auto build = [&](const std::string& spec) {
    return harness::build_initial_data(harness::DataSpec::parse(spec), grid).with_mass(1.0);
  };
  const auto u0 = build("smoothed-ball(r=1, a=0.5, eps=0.05, floor=1e-3)");
  const auto u1 = build("smoothed-ball(r=1, a=1.2, eps=0.05, floor=1e-3)");
  const auto t = uniform_times(20);
  std::string detail;
  bool ok = true;
  for (double m : {0.7, 1.0, 2.0}) {
    const auto scan = geodesic_convexity_scan(u0, u1, Nonlinearity::power(m), t);
    const double rel = scan.min_second_difference / scan.scale;
    ok = ok && rel >= -1e-8;
    detail += "m=" + g(m) + ": min second diff/scale " + g(rel) + "; ";
  }
  const auto bad = geodesic_convexity_scan(u0, u1, Nonlinearity::power(0.4), t);
  ok = ok && bad.min_second_difference < 0;
  detail += "m=0.4: min second diff " + g(bad.min_second_difference) + " at t=" + g(bad.argmin_t);
  o.pass = ok;
  o.detail = detail;
  return o;
}

// 10 -------------------------------------------------------------------------
Outcome equivalence_sweep() {
  Outcome o;
  if (cli_path.empty()) {
    o.pass = false;
    o.detail = "no --cli path given";
    return o;
  }
  const auto dir = fs::temp_directory_path() / "wcontract_acceptance_sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg = dir / "sweep.cfg";
  std::ofstream(cfg) << "dims = 1, 2, 3\nm_min = 0.3\nm_max = 2.0\nm_step = 0.1\n"
                        "r = 1\na = 1\ndelta = 0.25\neps = 1e-4\nsteps = 10\nmarginal_band = 1e-3\n";
  const std::string cmd = cli_path + " -q sweep --config " + cfg.string() + " --out " + (dir / "out").string() +
                          " --workers 2";
  const int status = std::system(cmd.c_str());
  const int code = WEXITSTATUS(status);
  std::ifstream is(dir / "out" / "sweep.csv");
  std::string line;
  std::getline(is, line);
  int rows = 0, agree = 0, marginal = 0, mismatch = 0, errors = 0;
  std::string mismatches;
  while (std::getline(is, line)) {
    ++rows;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    const auto& a = cols.at(5);
    if (a == "yes") ++agree;
    else if (a == "marginal") ++marginal;
    else if (a == "error") ++errors;
    else {
      ++mismatch;
      mismatches += " d=" + cols[0] + ",m=" + cols[1];
    }
  }
  o.pass = code == 0 && rows == 54 && mismatch == 0 && errors == 0;
  o.detail = std::to_string(rows) + " rows: " + std::to_string(agree) + " agree, " + std::to_string(marginal) +
             " marginal, " + std::to_string(mismatch) + " mismatched" + mismatches + ", " + std::to_string(errors) +
             " errors; exit code " + std::to_string(code);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (arg == "--cli" && i + 1 < argc) cli_path = argv[++i];
    else {
      std::cerr << "usage: acceptance [--criterion N] [--cli PATH]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"condition threshold", condition_threshold},
      {"checker agreement", checker_agreement},
      {"W2 closed forms", w2_closed_forms},
      {"solver validation", solver_validation},
      {"contraction (sufficiency)", contraction_sufficiency},
      {"dissipation identity", dissipation_identity},
      {"counterexample (necessity)", counterexample_necessity},
      {"Taylor consistency", taylor_consistency},
      {"geodesic convexity", geodesic_convexity},
      {"equivalence sweep", equivalence_sweep},
  };
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (only && static_cast<std::size_t>(only) != k + 1) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << " (" << criteria[k].first << ") ["
              << fmt("%.1f", secs) << " s]: " << out.detail << std::endl;
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
