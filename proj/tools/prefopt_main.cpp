// prefopt command-line front end.
//
//   prefopt run --config experiment.json [--seed N] [--out DIR] [--quiet]
//   prefopt sweep --config sweep.json [--seed N] [--out DIR] [--quiet]
//   prefopt gradcheck [--kinds dpo,cdpo,...] [--trials N] [--seed N] [--quiet]
//
// Exit codes: 0 success, 1 runtime or check failure, 2 invalid configuration.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefopt/experiment.hpp"

namespace {

std::vector<std::string> split_csv_list(const std::string& joined) {
  std::vector<std::string> out;
  std::stringstream ss(joined);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale laboratory for margin-based preference "
               "optimization objectives"};
  app.require_subcommand(1);

  std::string config_path;
  std::string sweep_path;
  std::int64_t seed_flag = -1;
  std::string out_flag;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_flag, "Override the config seed");
    sub->add_option("--out", out_flag, "Override the output directory");
    sub->add_flag("--quiet", quiet, "Suppress progress output");
  };

  CLI::App* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  add_common(run);

  CLI::App* sweep = app.add_subcommand("sweep", "Run a one-axis sweep");
  sweep->add_option("--config", sweep_path, "Sweep spec (JSON)")->required();
  add_common(sweep);

  std::string kinds_flag;
  long trials = 1000;
  std::uint64_t gradcheck_seed = 20240601;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of every objective kernel");
  gradcheck->add_option(
      "--kinds", kinds_flag,
      "Comma-separated objective kinds (default: all, plus both aot "
      "surrogates)");
  gradcheck->add_option("--trials", trials, "Random points per kernel");
  gradcheck->add_option("--seed", gradcheck_seed, "Sampling seed");
  gradcheck->add_flag("--quiet", quiet, "Only print failures");

  CLI11_PARSE(app, argc, argv);

  prefopt::RunOptions options;
  if (seed_flag >= 0) {
    options.seed_override = static_cast<std::uint64_t>(seed_flag);
  }
  if (!out_flag.empty()) options.out_override = out_flag;
  options.quiet = quiet;

  if (run->parsed()) {
    return prefopt::cmd_run(config_path, options);
  }
  if (sweep->parsed()) {
    return prefopt::cmd_sweep(sweep_path, options);
  }
  return prefopt::cmd_gradcheck(split_csv_list(kinds_flag), trials,
                                gradcheck_seed, quiet);
}
