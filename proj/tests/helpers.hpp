// Shared fixtures for the test suites.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prefopt/datagen.hpp"
#include "prefopt/objectives.hpp"
#include "prefopt/trainer.hpp"

namespace testutil {

inline prefopt::ObjectiveConfig objective(prefopt::ObjectiveKind kind) {
  prefopt::ObjectiveConfig cfg;
  cfg.kind = kind;
  return cfg;
}

// A world where response 0 dominates every prompt by `gap` quality units.
inline prefopt::World separable_world(int prompts, int responses, double gap,
                                      std::uint64_t seed = 7,
                                      double lambda_len = 0.0,
                                      double quality_std = 0.5) {
  prefopt::WorldConfig cfg;
  cfg.num_prompts = prompts;
  cfg.num_responses = responses;
  cfg.quality_std = quality_std;
  cfg.quality_gap = gap;
  cfg.lambda_len = lambda_len;
  return prefopt::generate_world(cfg, seed);
}

inline prefopt::TrainConfig train_config(prefopt::ObjectiveKind kind) {
  prefopt::TrainConfig cfg;
  cfg.objective.pairwise.kind = kind;
  return cfg;
}

inline prefopt::TrainConfig aot_train_config() {
  prefopt::TrainConfig cfg;
  cfg.objective.is_aot = true;
  return cfg;
}

// Mean of a per-step telemetry field over one epoch.
template <typename Getter>
double epoch_mean(const std::vector<prefopt::StepTelemetry>& telemetry,
                  long steps_per_epoch, int epoch, Getter&& get) {
  double sum = 0.0;
  long count = 0;
  for (long s = epoch * steps_per_epoch;
       s < (epoch + 1) * steps_per_epoch &&
       s < static_cast<long>(telemetry.size());
       ++s) {
    sum += get(telemetry[s]);
    ++count;
  }
  return sum / static_cast<double>(count);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("prefopt_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
