#include <CLI11.hpp>

#include <cstdint>
#include <iostream>

#include "wcontract/wcontract.hpp"

namespace h = wcontract::harness;

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear diffusion on balls: condition checks, solver runs, W2 contraction experiments"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = "out";
  unsigned workers = 1;
  std::uint64_t seed = 0;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress lines");

  using Runner = h::RunResult (*)(const h::Config&, const h::RunOptions&);
  const std::pair<const char*, Runner> commands[] = {
      {"check", h::run_check},   {"solve", h::run_solve},
      {"contract", h::run_contract}, {"sweep", h::run_sweep},
      {"counterexample", h::run_counterexample}, {"geodesic", h::run_geodesic},
  };
  const char* help[] = {"Evaluate the displacement-convexity condition for a nonlinearity",
                        "Evolve one initial datum and write snapshots",
                        "Co-evolve two data and track W2",
                        "Condition vs contraction verdicts over a (d, m) grid",
                        "Dissipation integrals of the smoothed concentric-ball pair",
                        "Entropy along a displacement interpolant"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->add_option("--config", config_path, "key = value configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--workers", workers, "Concurrent sweep cells")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Seed for randomized test data");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : h::kConfigError;
  }

  h::RunOptions opt;
  opt.out_dir = out_dir;
  opt.workers = workers;
  opt.seed = seed;
  opt.log = quiet ? nullptr : &std::cout;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      const auto cfg = h::Config::load(config_path);
      const auto result = commands[i].second(cfg, opt);
      for (const auto& key : cfg.unused()) std::cerr << "warning: unused config key '" << key << "'\n";
      return result.exit_code;
    } catch (const wcontract::Error& e) {
      std::cerr << "error (" << wcontract::to_string(e.kind()) << "): " << e.what() << '\n';
      return h::exit_code_for(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return h::kNumericalFailure;
    }
  }
  return h::kConfigError;
}
