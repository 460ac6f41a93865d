// Synthetic preference worlds: a latent judge reward with a controllable
// length-bias component, and Bradley-Terry preference sampling with optional
// label noise.
//
// The judge reward is R*(x, y) = quality(x, y) + lambda_len * z(x, y), where
// z is the per-world z-score of response length. Normalizing lengths makes
// lambda_len scale-free across world sizes.
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefopt/math.hpp"
#include "prefopt/matrix.hpp"

namespace prefopt {

struct WorldConfig {
  int num_prompts = 16;
  int num_responses = 8;
  double quality_std = 1.0;  // i.i.d. Gaussian latent quality
  // Optional separability dial: added to the quality of response 0 of every
  // prompt, making it the designated best response.
  double quality_gap = 0.0;
  int length_min = 8;    // response lengths are log-uniform on
  int length_max = 256;  // [length_min, length_max]
  double lambda_len = 0.0;
  double ref_logit_std = 0.0;  // 0 = uniform reference policy

  void validate() const {
    if (num_prompts < 1) throw std::invalid_argument("num_prompts must be >= 1");
    if (num_responses < 1) {
      throw std::invalid_argument("num_responses must be >= 1");
    }
    require_finite(quality_std, "quality_std");
    require_finite(quality_gap, "quality_gap");
    require_finite(lambda_len, "lambda_len");
    require_finite(ref_logit_std, "ref_logit_std");
    if (quality_std < 0.0) {
      throw std::invalid_argument("quality_std must be >= 0");
    }
    if (ref_logit_std < 0.0) {
      throw std::invalid_argument("ref_logit_std must be >= 0");
    }
    if (length_min < 1 || length_max < length_min) {
      throw std::invalid_argument("need 1 <= length_min <= length_max");
    }
  }
};

struct World {
  int num_prompts = 0;
  int num_responses = 0;
  Mat<double> quality;      // latent true quality q(x, y)
  Mat<int> length;          // response length in tokens
  Mat<double> norm_length;  // z-scored length, derived from `length`
  double lambda_len = 0.0;
  Mat<double> ref_logits;
  std::uint64_t seed = 0;

  double judge_reward(int x, int y) const {
    return quality(x, y) + lambda_len * norm_length(x, y);
  }
};

// Recomputes the z-scored lengths (population moments over the whole world).
// A degenerate world with constant lengths gets all-zero z-scores.
inline void normalize_lengths(World& world) {
  world.norm_length = Mat<double>(world.length.rows, world.length.cols, 0.0);
  const std::size_t n = world.length.data.size();
  double mean = 0.0;
  for (int v : world.length.data) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (int v : world.length.data) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      world.norm_length.data[i] = (world.length.data[i] - mean) / sd;
    }
  }
}

inline World generate_world(const WorldConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  World world;
  world.num_prompts = cfg.num_prompts;
  world.num_responses = cfg.num_responses;
  world.lambda_len = cfg.lambda_len;
  world.seed = seed;
  world.quality = Mat<double>(cfg.num_prompts, cfg.num_responses, 0.0);
  world.length = Mat<int>(cfg.num_prompts, cfg.num_responses, cfg.length_min);
  world.ref_logits = Mat<double>(cfg.num_prompts, cfg.num_responses, 0.0);

  std::mt19937_64 rng(derive_seed(seed, 0));
  if (cfg.quality_std > 0.0) {
    std::normal_distribution<double> qdist(0.0, cfg.quality_std);
    for (double& q : world.quality.data) q = qdist(rng);
  }
  if (cfg.quality_gap != 0.0) {
    for (int x = 0; x < cfg.num_prompts; ++x) {
      world.quality(x, 0) += cfg.quality_gap;
    }
  }

  std::mt19937_64 len_rng(derive_seed(seed, 1));
  const double log_lo = std::log(static_cast<double>(cfg.length_min));
  const double log_hi = std::log(static_cast<double>(cfg.length_max));
  for (int& len : world.length.data) {
    const double u = uniform01(len_rng);
    const double raw = std::exp(log_lo + u * (log_hi - log_lo));
    len = std::clamp(static_cast<int>(std::llround(raw)), cfg.length_min,
                     cfg.length_max);
  }
  normalize_lengths(world);

  if (cfg.ref_logit_std > 0.0) {
    std::mt19937_64 ref_rng(derive_seed(seed, 2));
    std::normal_distribution<double> rdist(0.0, cfg.ref_logit_std);
    for (double& r : world.ref_logits.data) r = rdist(ref_rng);
  }
  return world;
}

// P(a beats b) under the Bradley-Terry model. Computed so that
// bt_probability(a, b) + bt_probability(b, a) == 1 holds exactly.
inline double bt_probability(double r_w, double r_l) {
  require_finite(r_w, "r_w");
  require_finite(r_l, "r_l");
  const double d = r_w - r_l;
  if (d == 0.0) return 0.5;
  if (d < 0.0) return 1.0 - bt_probability(r_l, r_w);
  return sigmoid(d);
}

struct PrefRecord {
  int prompt = 0;
  int winner = 0;
  int loser = 0;

  friend bool operator==(const PrefRecord&, const PrefRecord&) = default;
};

struct PreferenceDataset {
  std::vector<PrefRecord> records;
  double flip_rate = 0.0;  // provenance; flips are baked into the records
};

// Swaps winner/loser independently with the given probability.
inline void flip_labels(std::vector<PrefRecord>& records, double rate,
                        std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 0.5)) {
    throw std::invalid_argument("flip_rate must be in [0, 0.5), got " +
                                format_double(rate));
  }
  for (PrefRecord& rec : records) {
    if (uniform01(rng) < rate) std::swap(rec.winner, rec.loser);
  }
}

inline PreferenceDataset generate_preferences(const World& world, int n,
                                              double flip_rate,
                                              std::uint64_t seed) {
  if (world.num_responses < 2) {
    throw std::invalid_argument(
        "preference sampling needs at least 2 responses per prompt");
  }
  if (n < 1) throw std::invalid_argument("need at least 1 preference record");
  if (!(flip_rate >= 0.0 && flip_rate < 0.5)) {
    throw std::invalid_argument("flip_rate must be in [0, 0.5), got " +
                                format_double(flip_rate));
  }
  PreferenceDataset dataset;
  dataset.flip_rate = flip_rate;
  dataset.records.reserve(n);
  std::mt19937_64 rng(derive_seed(seed, 0));
  for (int i = 0; i < n; ++i) {
    const int x = uniform_index(rng, world.num_prompts);
    const int a = uniform_index(rng, world.num_responses);
    int b = uniform_index(rng, world.num_responses - 1);
    if (b >= a) ++b;  // uniform over distinct pairs
    const double p = bt_probability(world.judge_reward(x, a),
                                    world.judge_reward(x, b));
    const bool a_wins = uniform01(rng) < p;
    dataset.records.push_back(a_wins ? PrefRecord{x, a, b}
                                     : PrefRecord{x, b, a});
  }
  std::mt19937_64 flip_rng(derive_seed(seed, 1));
  flip_labels(dataset.records, flip_rate, flip_rng);
  return dataset;
}

}  // namespace prefopt
