#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wcontract/harness.hpp"

using namespace wcontract;
using namespace wcontract::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("wcontract_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunOptions quiet(const fs::path& out) {
  RunOptions o;
  o.out_dir = out;
  return o;
}


}  // namespace

TEST(Config, ParsesKeyValuesAndComments) {
  const auto cfg = Config::parse_string("# header\n d = 3 \nR=2 # trailing\n\nlist = 1, 2,3\n");
  EXPECT_EQ(cfg.integer("d", 0), 3);
  EXPECT_EQ(cfg.number("R"), 2.0);
  EXPECT_EQ(cfg.numbers("list", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(cfg.number("missing", 7.0), 7.0);
  EXPECT_TRUE(cfg.unused().empty());
}

TEST(Config, Errors) {
  EXPECT_THROW(Config::parse_string("just a line\n"), Error);
  EXPECT_THROW(Config::parse_string("a = 1\na = 2\n"), Error);
  const auto cfg = Config::parse_string("x = abc\n");
  try {
    cfg.number("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
  EXPECT_THROW(cfg.str("nope"), Error);
}

TEST(Config, ReportsUnusedKeys) {
  const auto cfg = Config::parse_string("a = 1\nb = 2\n");
  cfg.number("a");
  EXPECT_EQ(cfg.unused(), (std::vector<std::string>{"b"}));
}

TEST(DataSpec, Parse) {
  const auto s = DataSpec::parse("smoothed-ball(r=1, a=0.5, eps = 0.05)");
  EXPECT_EQ(s.name, "smoothed-ball");
  EXPECT_EQ(s.number("a"), 0.5);
  EXPECT_EQ(s.number("eps"), 0.05);
  EXPECT_THROW(DataSpec::parse("uniform-ball(r=1"), Error);
  EXPECT_THROW(DataSpec::parse("uniform-ball(r)"), Error);
}

TEST(InitialData, BuiltIns) {
  const auto g = make_grid(RadialGrid::uniform(3, 2.0, 400));
  const auto ball = build_initial_data(DataSpec::parse("uniform-ball(r=2, a=1)"), g);
  EXPECT_NEAR(ball.mass(), 2 * unit_ball_volume(3), 1e-12);
  const auto sm = build_initial_data(DataSpec::parse("smoothed-ball(r=1, a=0.5, eps=0.1)"), g);
  EXPECT_NEAR(sm.min(), 0.1, 1e-12);
  EXPECT_NEAR(sm.max(), 1.0, 1e-12);
  const auto gl = build_initial_data(DataSpec::parse("gaussian-like(amplitude=2, width=0.3, base=0.01)"), g);
  EXPECT_NEAR(gl[0], 2.01, 1e-3);
  const auto cfg = Config::parse_string("");
  const auto tab = build_initial_data(DataSpec::parse(std::string("table(path=") + WCONTRACT_TEST_DATA "/profile.txt)"), g, cfg);
  EXPECT_NEAR(tab[0], 1.0, 1e-3);
  EXPECT_THROW(build_initial_data(DataSpec::parse("sphere(r=1)"), g), Error);
  EXPECT_THROW(build_initial_data(DataSpec::parse("uniform-ball(r=-1, a=1)"), g), Error);
  EXPECT_THROW(build_initial_data(DataSpec::parse("table(path=/nonexistent/file)"), g), Error);
}

TEST(RunCheck, Examples) {
  const auto out = scratch("check");
  EXPECT_EQ(run_check(Config::parse_string("nonlinearity = power:m=1.0\nd = 2\n"), quiet(out)).verdict, "holds");
  EXPECT_EQ(run_check(Config::parse_string("nonlinearity = linear\nd = 7\n"), quiet(out)).verdict, "holds");
  EXPECT_EQ(run_check(Config::parse_string("nonlinearity = power:m=0.6\nd = 4\n"), quiet(out)).verdict, "violated");
  const auto r = run_check(Config::parse_string("nonlinearity = power:m=0.6\ndims = 1,2,3,4\n"), quiet(out));
  EXPECT_EQ(r.exit_code, kSuccess);
  EXPECT_EQ(r.verdict, "agree");
  EXPECT_NE(slurp(out / "check.csv").find("7.50000000000000e-01"), std::string::npos);
}

TEST(RunSolve, WritesSnapshotsAndManifest) {
  const auto out = scratch("solve");
  const auto cfg = Config::parse_string(
      "nonlinearity = power:m=2\nd = 3\nR = 1\nN = 50\ninitial = gaussian-like(amplitude=1, width=0.2, base=0.1)\n"
      "t_end = 0.02\nsnapshots = 0.01, 0.02\n");
  EXPECT_EQ(run_solve(cfg, quiet(out)).exit_code, kSuccess);
  EXPECT_TRUE(fs::exists(out / "snapshot_0002.dat"));
  const auto u = read_density((out / "snapshot_0002.dat").string());
  const auto u0 = read_density((out / "snapshot_0000.dat").string());
  EXPECT_NEAR(u.mass() / u0.mass(), 1.0, 1e-12);
  EXPECT_NE(slurp(out / "manifest.csv").find("snapshot_0001.dat"), std::string::npos);
}

TEST(RunContract, IdenticalDataStayAtZero) {
  const auto out = scratch("contract_same");
  const auto cfg = Config::parse_string(
      "nonlinearity = power:m=2\nd = 3\nR = 1\nN = 60\ninitial_u = gaussian-like(amplitude=1, width=0.2, base=0.1)\n"
      "initial_v = gaussian-like(amplitude=1, width=0.2, base=0.1)\nt_end = 0.01\n");
  EXPECT_EQ(run_contract(cfg, quiet(out)).verdict, "contractive");
  std::istringstream rows(slurp(out / "report.csv"));
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) EXPECT_EQ(line.substr(line.find(',') + 1, 20), "0.00000000000000e+00");
}

TEST(RunContract, SmoothPairIsContractiveAndDeterministic) {
  const std::string text =
      "nonlinearity = power:m=2\nd = 3\nR = 1.5\nN = 150\n"
      "initial_u = smoothed-ball(r=1, a=0.4, eps=0.2, floor=0.05)\n"
      "initial_v = smoothed-ball(r=1, a=0.9, eps=0.2, floor=0.05)\nt_end = 0.02\n";
  const auto a = scratch("contract_a"), b = scratch("contract_b");
  EXPECT_EQ(run_contract(Config::parse_string(text), quiet(a)).verdict, "contractive");
  run_contract(Config::parse_string(text), quiet(b));
  EXPECT_EQ(slurp(a / "report.csv"), slurp(b / "report.csv"));
  EXPECT_EQ(slurp(a / "summary.txt"), slurp(b / "summary.txt"));
}

TEST(RunContract, CounterexamplePairIsNonContractive) {
  const auto out = scratch("contract_cx");
  const auto cfg = Config::parse_string(
      "nonlinearity = power:m=0.4\npair = counterexample\nd = 3\nr = 1\na = 1\ndelta = 0.1\neps = 1e-3\nR = 1.5\n"
      "t_end = 2e-6\nrecord_dissipation = no\n");
  EXPECT_EQ(run_contract(cfg, quiet(out)).verdict, "non-contractive");
  const auto summary = slurp(out / "summary.txt");
  EXPECT_NE(summary.find("first_w2_increase_t"), std::string::npos);
}

TEST(RunGeodesic, ConvexAndNonconvex) {
  const std::string base =
      "d = 3\nR = 2\nN = 400\ninitial_u = smoothed-ball(r=1, a=0.5, eps=0.05, floor=1e-3)\n"
      "initial_v = smoothed-ball(r=1, a=1.2, eps=0.05, floor=1e-3)\nsteps = 10\n";
  const auto out = scratch("geodesic");
  EXPECT_EQ(run_geodesic(Config::parse_string("nonlinearity = power:m=2\n" + base), quiet(out)).verdict, "convex");
  EXPECT_EQ(run_geodesic(Config::parse_string("nonlinearity = power:m=0.4\n" + base), quiet(out)).verdict, "nonconvex");
}

TEST(RunCounterexample, WritesSweepColumns) {
  const auto out = scratch("cx");
  const auto cfg = Config::parse_string("nonlinearity = power:m=2\nd = 3\ndelta = 0.1\nR = 1.5\neps_values = 1e-2, 3e-3, 1e-3\n");
  EXPECT_EQ(run_counterexample(cfg, quiet(out)).verdict, "nonpositive-limit");
  const auto csv = slurp(out / "counterexample.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "d,m,r,a,delta,eps,I1,I2,I1_plus_I2,limit_formula,w2_initial_sq");
  EXPECT_THROW(run_counterexample(Config::parse_string("nonlinearity = power:m=2\neps_values = 0.5\n"), quiet(out)),
               Error);
}

TEST(RunSweep, SmallGridAgreesAndIsDeterministic) {
  const std::string text = "dims = 1, 3\nm_min = 0.4\nm_max = 1.0\nm_step = 0.6\nsteps = 4\n";
  const auto a = scratch("sweep_a"), b = scratch("sweep_b");
  auto opt = quiet(a);
  opt.workers = 2;
  const auto r = run_sweep(Config::parse_string(text), opt);
  EXPECT_EQ(r.exit_code, kSuccess) << r.verdict;
  run_sweep(Config::parse_string(text), quiet(b));
  EXPECT_EQ(slurp(a / "sweep.csv"), slurp(b / "sweep.csv"));
  EXPECT_TRUE(fs::exists(a / "cells" / "d3_m0.400.csv"));
  std::istringstream rows(slurp(a / "sweep.csv"));
  std::string line;
  std::getline(rows, line);
  int n = 0;
  while (std::getline(rows, line)) {
    ++n;
    EXPECT_NE(line.find(",yes,"), std::string::npos) << line;
  }
  EXPECT_EQ(n, 4);
}

TEST(RunSweep, MarginalBand) {
  SweepCell c;
  c.d = 2;
  c.m = 0.5;
  c.marginal = true;
  c.condition = "holds";
  c.contraction = "non-contractive";
  EXPECT_EQ(c.agreement(), "marginal");
  c.marginal = false;
  EXPECT_EQ(c.agreement(), "no");
}

TEST(Cli, ExitCodes) {
  const char* cli = std::getenv("WCONTRACT_CLI");
  const char* configs = std::getenv("WCONTRACT_CONFIGS");
  if (!cli || !configs) GTEST_SKIP() << "CLI path not provided";
  const auto out = scratch("cli");
  auto run = [&](const std::string& args) {
    const int status = std::system((std::string(cli) + " -q " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("check --config " + std::string(configs) + "/check.cfg --out " + out.string()), 0);
  EXPECT_EQ(run("check --config /nonexistent.cfg"), 1);
  EXPECT_EQ(run("bogus"), 1);
  const auto bad = out / "bad.cfg";
  std::ofstream(bad) << "nonlinearity = power:m=2\nd = 3\nR = 1\nN = 20\n"
                        "initial_u = gaussian-like(amplitude=1, width=0.2, base=0.1)\n"
                        "initial_v = gaussian-like(amplitude=3, width=0.2, base=0.1)\n"
                        "scheme = explicit\ndt = 1\nt_end = 2\n";
  EXPECT_EQ(run("contract --config " + bad.string() + " --out " + out.string()), 2);
}
