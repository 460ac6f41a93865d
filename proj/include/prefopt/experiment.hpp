// Pipeline orchestration: generate -> train -> evaluate, plus output-file
// emission and the run/sweep/gradcheck command entry points used by the CLI.
//
// A run writes into its output directory:
//   manifest.json   resolved config (re-runnable; extra data under "_meta")
//   world.txt       the generated world
//   dataset.txt     the sampled preference records
//   telemetry.csv   one row per optimizer step
//   eval.csv        win rate, LC win rate and fit details (single row)
//   buckets.csv     active fraction per length-difference bucket
//   summary.txt     human-readable digest
//   checkpoints/    final.policy and optional per-epoch checkpoints
#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "prefopt/config.hpp"
#include "prefopt/gradcheck.hpp"
#include "prefopt/io.hpp"
#include "prefopt/metrics.hpp"
#include "prefopt/trainer.hpp"

namespace prefopt {

struct RunOptions {
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  bool quiet = false;
};

struct RunOutputs {
  ExperimentConfig config;
  std::filesystem::path out_dir;
  EvalReport report;
  double final_mean_loss = 0.0;
  double final_active_fraction = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "win_rate,lc_win_rate,n_matches,win_rate_se,lc_intercept,"
         "lc_length_coef,lc_converged,lc_iterations\n";
  out << format_double(report.win_rate) << ','
      << format_double(report.lc_win_rate) << ',' << report.n_matches << ','
      << format_double(report.win_rate_se()) << ','
      << format_double(report.lc.intercept) << ','
      << format_double(report.lc.length_coef) << ','
      << (report.lc.converged ? 1 : 0) << ',' << report.lc.iterations << '\n';
}

inline void write_buckets_csv(std::ostream& out,
                              const std::vector<LengthBucket>& buckets) {
  out << "bucket_lo,bucket_hi,active_fraction,pair_count\n";
  for (const LengthBucket& b : buckets) {
    out << format_double(b.lo) << ',' << format_double(b.hi) << ','
        << format_double(b.active_fraction) << ',' << b.count << '\n';
  }
}

inline void write_summary(std::ostream& out, const ExperimentConfig& cfg,
                          const TrainResult& train_result,
                          const EvalReport& report) {
  out << "prefopt run summary\n";
  out << "objective: " << cfg.train.objective.name() << "\n";
  out << "world: " << cfg.world.num_prompts << " prompts x "
      << cfg.world.num_responses << " responses, lambda_len "
      << format_double(cfg.world.lambda_len) << ", seed " << cfg.seed << "\n";
  out << "pairs: " << cfg.num_pairs << " (flip_rate "
      << format_double(cfg.flip_rate) << ")\n";
  out << "training: " << cfg.train.epochs << " epochs, batch_size "
      << cfg.train.batch_size << ", accumulation_steps "
      << cfg.train.accumulation_steps << ", optimizer "
      << to_string(cfg.train.optimizer) << ", lr "
      << format_double(cfg.train.learning_rate) << "\n";
  if (!train_result.telemetry.empty()) {
    const StepTelemetry& last = train_result.telemetry.back();
    out << "final step " << last.step << ": mean_loss "
        << format_double(last.mean_loss) << ", active_fraction "
        << format_double(last.active_fraction) << "\n";
  }
  out << "win_rate: " << format_double(report.win_rate) << " (se "
      << format_double(report.win_rate_se()) << ", n " << report.n_matches
      << ")\n";
  out << "lc_win_rate: " << format_double(report.lc_win_rate)
      << " (length_coef " << format_double(report.lc.length_coef)
      << ", converged " << (report.lc.converged ? "yes" : "no") << ")\n";
  out << "active fraction by winner-loser length difference:\n";
  for (const LengthBucket& b : report.length_buckets) {
    out << "  [" << format_double(b.lo) << ", " << format_double(b.hi)
        << "]: " << format_double(b.active_fraction) << " (pairs " << b.count
        << ")\n";
  }
  for (const std::string& w : train_result.warnings) {
    out << "warning: " << w << "\n";
  }
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace detail

inline RunOutputs run_experiment(const json& user_config,
                                 const RunOptions& options = {}) {
  json effective = user_config;
  if (options.seed_override) effective["seed"] = *options.seed_override;
  if (options.out_override) effective["output_dir"] = *options.out_override;
  ExperimentConfig cfg = parse_experiment_config(effective);

  RunOutputs outputs;
  outputs.config = cfg;
  outputs.out_dir = cfg.output_dir;
  const auto& out_dir = outputs.out_dir;
  std::filesystem::create_directories(out_dir / "checkpoints");

  const World world = generate_world(cfg.world, cfg.world_seed());
  save_world(world, out_dir / "world.txt");
  const PreferenceDataset dataset =
      generate_preferences(world, cfg.num_pairs, cfg.flip_rate,
                           cfg.data_seed());
  save_dataset(dataset, out_dir / "dataset.txt");

  const int checkpoint_every = cfg.checkpoint_every_epochs;
  const auto on_epoch_end = [&](int epoch, const PolicyTable& policy) {
    if (checkpoint_every > 0 && (epoch + 1) % checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.policy", epoch + 1);
      save_policy(policy, cfg.train.seed, out_dir / "checkpoints" / name);
    }
  };
  const TrainResult train_result = train(world, dataset, cfg.train,
                                         on_epoch_end);
  save_policy(train_result.policy, cfg.train.seed,
              out_dir / "checkpoints" / "final.policy");
  {
    auto out = detail::open_output(out_dir / "telemetry.csv");
    write_telemetry_csv(out, train_result.telemetry);
  }

  const WinRateResult sim = simulate_win_rate(train_result.policy, world,
                                              cfg.n_matches, cfg.eval_seed());
  if (cfg.dump_match_log) {
    auto out = detail::open_output(out_dir / "match_log.csv");
    out << "len_diff,win\n";
    for (const MatchRecord& m : sim.match_log) {
      out << format_double(m.len_diff) << ',' << (m.win ? 1 : 0) << '\n';
    }
  }
  EvalReport report;
  report.win_rate = sim.win_rate;
  report.n_matches = cfg.n_matches;
  report.lc = fit_lc(sim.match_log);
  report.lc_win_rate = lc_win_rate(report.lc, report.win_rate);
  report.length_buckets =
      cfg.train.objective.is_aot
          ? active_fraction_by_length(dataset, world, train_result.policy,
                                      cfg.train.objective.aot, cfg.buckets)
          : active_fraction_by_length(dataset, world, train_result.policy,
                                      cfg.train.objective.pairwise,
                                      cfg.buckets);
  {
    auto out = detail::open_output(out_dir / "eval.csv");
    detail::write_eval_csv(out, report);
  }
  {
    auto out = detail::open_output(out_dir / "buckets.csv");
    detail::write_buckets_csv(out, report.length_buckets);
  }
  {
    auto out = detail::open_output(out_dir / "summary.txt");
    detail::write_summary(out, cfg, train_result, report);
  }
  {
    json manifest = to_resolved_json(cfg);
    manifest["_meta"] = {{"tool", "prefopt"},
                         {"timestamp", detail::timestamp_utc()}};
    auto out = detail::open_output(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }

  outputs.report = report;
  if (!train_result.telemetry.empty()) {
    outputs.final_mean_loss = train_result.telemetry.back().mean_loss;
    outputs.final_active_fraction =
        train_result.telemetry.back().active_fraction;
  }
  outputs.warnings = train_result.warnings;
  if (!options.quiet) {
    for (const std::string& w : train_result.warnings) {
      std::cerr << "warning: " << w << '\n';
    }
    std::cerr << cfg.train.objective.name() << ": win_rate "
              << format_double(report.win_rate) << ", lc_win_rate "
              << format_double(report.lc_win_rate) << " -> "
              << out_dir.string() << '\n';
  }
  return outputs;
}

struct SweepRow {
  std::string value;
  RunOutputs run;
};

inline std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                       const RunOptions& options = {}) {
  // Validate every point before running anything.
  std::vector<json> configs;
  std::vector<std::string> slugs;
  const std::string sweep_root = [&] {
    if (options.out_override) return *options.out_override;
    json probe = spec.base;
    if (options.seed_override) probe["seed"] = *options.seed_override;
    return parse_experiment_config(probe).output_dir;
  }();
  for (const json& value : spec.values) {
    json point = spec.base;
    if (options.seed_override) point["seed"] = *options.seed_override;
    set_config_by_path(point, spec.axis, value);
    const std::string slug = axis_value_slug(value);
    point["output_dir"] =
        (std::filesystem::path(sweep_root) / slug).string();
    parse_experiment_config(point);  // throws ConfigError on any bad point
    configs.push_back(std::move(point));
    slugs.push_back(slug);
  }

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    RunOptions point_options = options;
    point_options.out_override.reset();  // already baked into the config
    point_options.seed_override.reset();
    SweepRow row;
    row.value = spec.values[i].is_string() ? spec.values[i].get<std::string>()
                                           : spec.values[i].dump();
    row.run = run_experiment(configs[i], point_options);
    rows.push_back(std::move(row));
  }

  auto out = detail::open_output(std::filesystem::path(sweep_root) /
                                 "comparison.csv");
  out << "value,win_rate,lc_win_rate,final_mean_loss,final_active_fraction\n";
  for (const SweepRow& row : rows) {
    out << row.value << ',' << format_double(row.run.report.win_rate) << ','
        << format_double(row.run.report.lc_win_rate) << ','
        << format_double(row.run.final_mean_loss) << ','
        << format_double(row.run.final_active_fraction) << '\n';
  }
  return rows;
}

// --- command wrappers (exit codes: 0 ok, 1 runtime/check failure, 2 config) ---

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  json parsed;
  try {
    parsed = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parsed;
}

inline int cmd_run(const std::filesystem::path& config_path,
                   const RunOptions& options = {}) {
  try {
    run_experiment(load_json_file(config_path), options);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int cmd_sweep(const std::filesystem::path& sweep_path,
                     const RunOptions& options = {}) {
  try {
    run_sweep(parse_sweep_spec(load_json_file(sweep_path)), options);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int cmd_gradcheck(const std::vector<std::string>& kind_names,
                         long trials, std::uint64_t seed, bool quiet) {
  std::vector<ObjectiveKind> kinds;
  try {
    if (kind_names.empty()) {
      kinds = all_objective_kinds();
    } else {
      for (const std::string& name : kind_names) {
        kinds.push_back(objective_kind_from_string(name));
      }
    }
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  const auto reports = gradcheck_all(kinds, trials, seed);
  bool all_pass = true;
  for (const GradCheckReport& r : reports) {
    all_pass = all_pass && r.pass;
    if (!quiet) {
      std::cout << (r.pass ? "ok   " : "FAIL ") << r.name
                << "  worst_rel_err " << format_double(r.worst_rel_err)
                << "  points " << r.points_checked << " (skipped "
                << r.points_skipped_kink << " kink, "
                << r.points_skipped_noise << " unresolvable)\n";
    } else if (!r.pass) {
      std::cout << "FAIL " << r.name << "  worst_rel_err "
                << format_double(r.worst_rel_err) << '\n';
    }
  }
  return all_pass ? 0 : 1;
}

}  // namespace prefopt
