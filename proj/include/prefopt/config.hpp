// Experiment configuration: a JSON file with sections mirroring the module
// layout (world / data / train / eval). Every field has a default; unknown
// keys are hard errors with the offending path in the message. The reserved
// top-level key "_meta" is ignored so a run manifest can be fed back in as a
// config.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefopt/datagen.hpp"
#include "prefopt/math.hpp"
#include "prefopt/trainer.hpp"

namespace prefopt {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  WorldConfig world;
  int num_pairs = 1000;
  double flip_rate = 0.0;
  TrainConfig train;  // train.seed is resolved from the top-level seed
  int checkpoint_every_epochs = 0;
  int n_matches = 2000;
  int buckets = 5;
  bool dump_match_log = false;

  // Sub-stream seeds; the counters are fixed so that overriding the
  // top-level seed re-seeds every stage coherently.
  std::uint64_t world_seed() const { return derive_seed(seed, 1); }
  std::uint64_t data_seed() const { return derive_seed(seed, 2); }
  std::uint64_t derived_train_seed() const { return derive_seed(seed, 3); }
  std::uint64_t eval_seed() const { return derive_seed(seed, 4); }
};

namespace detail {

inline std::string join_path(const std::string& prefix,
                             const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline void check_keys(const json& obj, const std::string& prefix,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) {
    throw ConfigError((prefix.empty() ? std::string("config") : prefix) +
                      ": expected an object");
  }
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key: " + join_path(prefix, item.key()));
    }
  }
}

template <typename T>
T get_number(const json& obj, const std::string& prefix,
             const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      throw ConfigError(join_path(prefix, key) + ": expected an integer");
    }
  } else {
    if (!v.is_number()) {
      throw ConfigError(join_path(prefix, key) + ": expected a number");
    }
  }
  return v.get<T>();
}

inline std::string get_string(const json& obj, const std::string& prefix,
                              const std::string& key,
                              const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw ConfigError(join_path(prefix, key) + ": expected a string");
  }
  return v.get<std::string>();
}

inline bool get_bool(const json& obj, const std::string& prefix,
                     const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw ConfigError(join_path(prefix, key) + ": expected a boolean");
  }
  return v.get<bool>();
}

inline TrainObjective parse_objective(const json& obj,
                                      const std::string& prefix) {
  TrainObjective objective;
  const std::string kind =
      get_string(obj, prefix, "kind", "dpo");
  if (kind == "aot") {
    check_keys(obj, prefix, {"kind", "surrogate", "beta", "alpha",
                             "reject_side"});
    objective.is_aot = true;
    AotConfig& aot = objective.aot;
    try {
      aot.surrogate = aot_surrogate_from_string(
          get_string(obj, prefix, "surrogate", "logistic"));
      aot.reject_side = aot_reject_side_from_string(
          get_string(obj, prefix, "reject_side", "policy"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(prefix + ": " + e.what());
    }
    aot.beta = get_number<double>(obj, prefix, "beta", aot.beta);
    aot.alpha = get_number<double>(obj, prefix, "alpha", aot.alpha);
    return objective;
  }
  check_keys(obj, prefix, {"kind", "beta", "epsilon", "alpha", "m", "tau",
                           "gamma", "delta"});
  ObjectiveConfig& pw = objective.pairwise;
  try {
    pw.kind = objective_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(join_path(prefix, "kind") + ": " + e.what());
  }
  pw.beta = get_number<double>(obj, prefix, "beta", pw.beta);
  pw.epsilon = get_number<double>(obj, prefix, "epsilon", pw.epsilon);
  pw.alpha = get_number<double>(obj, prefix, "alpha", pw.alpha);
  pw.margin = get_number<double>(obj, prefix, "m", pw.margin);
  pw.tau = get_number<double>(obj, prefix, "tau", pw.tau);
  pw.gamma = get_number<double>(obj, prefix, "gamma", pw.gamma);
  pw.delta = get_number<double>(obj, prefix, "delta", pw.delta);
  return objective;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const json& root) {
  using detail::check_keys;
  using detail::get_bool;
  using detail::get_number;
  using detail::get_string;

  check_keys(root, "",
             {"_meta", "seed", "output_dir", "world", "data", "train", "eval"});
  ExperimentConfig cfg;
  cfg.seed = get_number<std::uint64_t>(root, "", "seed", cfg.seed);
  cfg.output_dir = get_string(root, "", "output_dir", cfg.output_dir);

  const json empty = json::object();
  const json& world = root.contains("world") ? root.at("world") : empty;
  check_keys(world, "world",
             {"num_prompts", "num_responses", "quality_std", "quality_gap",
              "length_min", "length_max", "lambda_len", "ref_logit_std"});
  cfg.world.num_prompts =
      get_number<int>(world, "world", "num_prompts", cfg.world.num_prompts);
  cfg.world.num_responses = get_number<int>(world, "world", "num_responses",
                                            cfg.world.num_responses);
  cfg.world.quality_std =
      get_number<double>(world, "world", "quality_std", cfg.world.quality_std);
  cfg.world.quality_gap =
      get_number<double>(world, "world", "quality_gap", cfg.world.quality_gap);
  cfg.world.length_min =
      get_number<int>(world, "world", "length_min", cfg.world.length_min);
  cfg.world.length_max =
      get_number<int>(world, "world", "length_max", cfg.world.length_max);
  cfg.world.lambda_len =
      get_number<double>(world, "world", "lambda_len", cfg.world.lambda_len);
  cfg.world.ref_logit_std = get_number<double>(world, "world", "ref_logit_std",
                                               cfg.world.ref_logit_std);

  const json& data = root.contains("data") ? root.at("data") : empty;
  check_keys(data, "data", {"num_pairs", "flip_rate"});
  cfg.num_pairs = get_number<int>(data, "data", "num_pairs", cfg.num_pairs);
  cfg.flip_rate = get_number<double>(data, "data", "flip_rate", cfg.flip_rate);

  const json& train = root.contains("train") ? root.at("train") : empty;
  check_keys(train, "train",
             {"objective", "epochs", "batch_size", "accumulation_steps",
              "optimizer", "learning_rate", "adam_beta1", "adam_beta2",
              "adam_eps", "shuffle", "init_perturb_std",
              "checkpoint_every_epochs", "seed", "delta_schedule"});
  if (train.contains("objective")) {
    cfg.train.objective =
        detail::parse_objective(train.at("objective"), "train.objective");
  }
  cfg.train.epochs = get_number<int>(train, "train", "epochs", cfg.train.epochs);
  cfg.train.batch_size =
      get_number<int>(train, "train", "batch_size", cfg.train.batch_size);
  cfg.train.accumulation_steps = get_number<int>(
      train, "train", "accumulation_steps", cfg.train.accumulation_steps);
  try {
    cfg.train.optimizer = optimizer_kind_from_string(
        get_string(train, "train", "optimizer", to_string(cfg.train.optimizer)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.optimizer: ") + e.what());
  }
  cfg.train.learning_rate = get_number<double>(train, "train", "learning_rate",
                                               cfg.train.learning_rate);
  cfg.train.adam_beta1 =
      get_number<double>(train, "train", "adam_beta1", cfg.train.adam_beta1);
  cfg.train.adam_beta2 =
      get_number<double>(train, "train", "adam_beta2", cfg.train.adam_beta2);
  cfg.train.adam_eps =
      get_number<double>(train, "train", "adam_eps", cfg.train.adam_eps);
  cfg.train.shuffle = get_bool(train, "train", "shuffle", cfg.train.shuffle);
  cfg.train.init_perturb_std = get_number<double>(
      train, "train", "init_perturb_std", cfg.train.init_perturb_std);
  cfg.checkpoint_every_epochs = get_number<int>(
      train, "train", "checkpoint_every_epochs", cfg.checkpoint_every_epochs);
  if (cfg.checkpoint_every_epochs < 0) {
    throw ConfigError("train.checkpoint_every_epochs: must be >= 0");
  }
  if (train.contains("seed") && !train.at("seed").is_null()) {
    cfg.train.seed =
        get_number<std::uint64_t>(train, "train", "seed", 0);
  } else {
    cfg.train.seed = cfg.derived_train_seed();
  }
  if (train.contains("delta_schedule") &&
      !train.at("delta_schedule").is_null()) {
    const json& sched = train.at("delta_schedule");
    check_keys(sched, "train.delta_schedule",
               {"delta_start", "delta_end", "ramp_epochs"});
    DeltaSchedule s;
    s.delta_start = detail::get_number<double>(sched, "train.delta_schedule",
                                               "delta_start", s.delta_start);
    s.delta_end = detail::get_number<double>(sched, "train.delta_schedule",
                                             "delta_end", s.delta_end);
    s.ramp_epochs = detail::get_number<double>(sched, "train.delta_schedule",
                                               "ramp_epochs", s.ramp_epochs);
    cfg.train.delta_schedule = s;
  }

  const json& eval = root.contains("eval") ? root.at("eval") : empty;
  check_keys(eval, "eval", {"n_matches", "buckets", "dump_match_log"});
  cfg.n_matches = get_number<int>(eval, "eval", "n_matches", cfg.n_matches);
  cfg.buckets = get_number<int>(eval, "eval", "buckets", cfg.buckets);
  cfg.dump_match_log =
      get_bool(eval, "eval", "dump_match_log", cfg.dump_match_log);

  // Range validation beyond what the stage configs check themselves.
  try {
    cfg.world.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.num_pairs < 1) throw ConfigError("data.num_pairs: must be >= 1");
  if (!(cfg.flip_rate >= 0.0 && cfg.flip_rate < 0.5)) {
    throw ConfigError("data.flip_rate: must be in [0, 0.5)");
  }
  if (cfg.n_matches < 10) throw ConfigError("eval.n_matches: must be >= 10");
  if (cfg.buckets < 1) throw ConfigError("eval.buckets: must be >= 1");
  return cfg;
}

// The fully resolved configuration; feeding this back into
// parse_experiment_config reproduces the run.
inline json to_resolved_json(const ExperimentConfig& cfg) {
  json objective;
  if (cfg.train.objective.is_aot) {
    const AotConfig& aot = cfg.train.objective.aot;
    objective = {{"kind", "aot"},
                 {"surrogate", to_string(aot.surrogate)},
                 {"beta", aot.beta},
                 {"alpha", aot.alpha},
                 {"reject_side", to_string(aot.reject_side)}};
  } else {
    const ObjectiveConfig& pw = cfg.train.objective.pairwise;
    objective = {{"kind", to_string(pw.kind)}, {"beta", pw.beta},
                 {"epsilon", pw.epsilon},      {"alpha", pw.alpha},
                 {"m", pw.margin},             {"tau", pw.tau},
                 {"gamma", pw.gamma},          {"delta", pw.delta}};
  }
  json sched;
  if (cfg.train.delta_schedule) {
    sched = {{"delta_start", cfg.train.delta_schedule->delta_start},
             {"delta_end", cfg.train.delta_schedule->delta_end},
             {"ramp_epochs", cfg.train.delta_schedule->ramp_epochs}};
  } else {
    sched = nullptr;
  }
  return json{
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"world",
       {{"num_prompts", cfg.world.num_prompts},
        {"num_responses", cfg.world.num_responses},
        {"quality_std", cfg.world.quality_std},
        {"quality_gap", cfg.world.quality_gap},
        {"length_min", cfg.world.length_min},
        {"length_max", cfg.world.length_max},
        {"lambda_len", cfg.world.lambda_len},
        {"ref_logit_std", cfg.world.ref_logit_std}}},
      {"data", {{"num_pairs", cfg.num_pairs}, {"flip_rate", cfg.flip_rate}}},
      {"train",
       {{"objective", objective},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"accumulation_steps", cfg.train.accumulation_steps},
        {"optimizer", to_string(cfg.train.optimizer)},
        {"learning_rate", cfg.train.learning_rate},
        {"adam_beta1", cfg.train.adam_beta1},
        {"adam_beta2", cfg.train.adam_beta2},
        {"adam_eps", cfg.train.adam_eps},
        {"shuffle", cfg.train.shuffle},
        {"init_perturb_std", cfg.train.init_perturb_std},
        {"checkpoint_every_epochs", cfg.checkpoint_every_epochs},
        {"seed", cfg.train.seed},
        {"delta_schedule", sched}}},
      {"eval",
       {{"n_matches", cfg.n_matches},
        {"buckets", cfg.buckets},
        {"dump_match_log", cfg.dump_match_log}}}};
}

// --- sweeps -------------------------------------------------------------------

struct SweepSpec {
  json base;  // an ExperimentConfig object
  std::string axis;
  std::vector<json> values;
};

inline SweepSpec parse_sweep_spec(const json& root) {
  detail::check_keys(root, "", {"_meta", "base", "axis", "values"});
  SweepSpec spec;
  if (!root.contains("base") || !root.at("base").is_object()) {
    throw ConfigError("base: expected an ExperimentConfig object");
  }
  spec.base = root.at("base");
  if (!root.contains("axis") || !root.at("axis").is_string()) {
    throw ConfigError("axis: expected a string parameter path");
  }
  spec.axis = root.at("axis").get<std::string>();
  if (!root.contains("values") || !root.at("values").is_array() ||
      root.at("values").empty()) {
    throw ConfigError("values: expected a nonempty array");
  }
  for (const json& v : root.at("values")) spec.values.push_back(v);
  return spec;
}

namespace detail {

inline std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

// Known parameter paths for sweep axes. Objective keys are the union over
// kinds; the strict per-kind check happens when each swept config is parsed.
inline bool axis_in_schema(const std::vector<std::string>& parts) {
  static const std::set<std::string> top = {"seed", "output_dir"};
  static const std::set<std::string> world = {
      "num_prompts", "num_responses", "quality_std", "quality_gap",
      "length_min",  "length_max",    "lambda_len",  "ref_logit_std"};
  static const std::set<std::string> data = {"num_pairs", "flip_rate"};
  static const std::set<std::string> train = {
      "epochs",        "batch_size", "accumulation_steps",
      "optimizer",     "learning_rate", "adam_beta1",
      "adam_beta2",    "adam_eps",   "shuffle",
      "init_perturb_std", "checkpoint_every_epochs", "seed"};
  static const std::set<std::string> objective = {
      "kind", "beta", "epsilon", "alpha", "m",
      "tau",  "gamma", "delta",  "surrogate", "reject_side"};
  static const std::set<std::string> schedule = {"delta_start", "delta_end",
                                                 "ramp_epochs"};
  if (parts.size() == 1) return top.count(parts[0]) > 0;
  if (parts.size() == 2) {
    if (parts[0] == "world") return world.count(parts[1]) > 0;
    if (parts[0] == "data") return data.count(parts[1]) > 0;
    if (parts[0] == "train") return train.count(parts[1]) > 0;
    if (parts[0] == "eval") {
      return parts[1] == "n_matches" || parts[1] == "buckets" ||
             parts[1] == "dump_match_log";
    }
    return false;
  }
  if (parts.size() == 3 && parts[0] == "train") {
    if (parts[1] == "objective") return objective.count(parts[2]) > 0;
    if (parts[1] == "delta_schedule") return schedule.count(parts[2]) > 0;
  }
  return false;
}

}  // namespace detail

// Sets `value` at the dotted path inside a config object, creating
// intermediate sections as needed. The path must name a known field.
inline void set_config_by_path(json& config, const std::string& axis,
                               const json& value) {
  const auto parts = detail::split_path(axis);
  if (parts.empty() || !detail::axis_in_schema(parts)) {
    throw ConfigError("axis does not name a config field: " + axis);
  }
  json* node = &config;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) {
      throw ConfigError("axis crosses a non-object at: " + parts[i]);
    }
  }
  (*node)[parts.back()] = value;
}

inline std::string axis_value_slug(const json& value) {
  std::string raw;
  if (value.is_string()) {
    raw = value.get<std::string>();
  } else {
    raw = value.dump();
  }
  std::string slug;
  for (char c : raw) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
    slug += ok ? c : '_';
  }
  return slug.empty() ? "value" : slug;
}

}  // namespace prefopt
