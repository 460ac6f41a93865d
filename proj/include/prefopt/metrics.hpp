// Evaluation: simulated head-to-head win rate against the reference policy,
// a length-controlled win-rate proxy, and the active-pair-fraction-by-length
// analysis.
//
// The length-controlled proxy fits win ~ sigmoid(b0 + b1 * len_diff) by
// damped Newton iterations and reports sigmoid(b0), the predicted win
// probability at the zero length-difference counterfactual.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefopt/aot.hpp"
#include "prefopt/datagen.hpp"
#include "prefopt/math.hpp"
#include "prefopt/objectives.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

struct MatchRecord {
  double len_diff = 0.0;  // normalized length, candidate minus reference
  bool win = false;
};

struct WinRateResult {
  double win_rate = 0.0;
  std::vector<MatchRecord> match_log;
};

// Per match: draw a prompt, sample one response from the trained table and
// one from the reference table, then let the world's judge pick via a
// Bradley-Terry draw on R*. Each match uses its own seed derived from the
// root seed and the match counter, so matches could run in parallel.
inline WinRateResult simulate_win_rate(const PolicyTable& policy,
                                       const World& world, int n_matches,
                                       std::uint64_t seed) {
  if (n_matches < 1) throw std::invalid_argument("n_matches must be >= 1");
  if (policy.logits.rows != world.num_prompts ||
      policy.logits.cols != world.num_responses) {
    throw std::invalid_argument("policy shape does not match world");
  }
  WinRateResult result;
  result.match_log.reserve(n_matches);
  long wins = 0;
  for (int i = 0; i < n_matches; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const int x = uniform_index(rng, world.num_prompts);
    const int a = sample_response(policy, x, rng, PolicySide::policy);
    const int b = sample_response(policy, x, rng, PolicySide::reference);
    const double p =
        bt_probability(world.judge_reward(x, a), world.judge_reward(x, b));
    const bool win = uniform01(rng) < p;
    wins += win ? 1 : 0;
    result.match_log.push_back(
        {world.norm_length(x, a) - world.norm_length(x, b), win});
  }
  result.win_rate = static_cast<double>(wins) / n_matches;
  return result;
}

struct LcFit {
  double intercept = 0.0;
  double length_coef = 0.0;
  bool converged = false;
  int iterations = 0;
  double se_intercept = 0.0;
  double se_length_coef = 0.0;
  // True when the length feature had zero variance and only the intercept
  // was fit; lc_win_rate then equals the raw win rate exactly.
  bool degenerate_feature = false;
  std::string diagnostic;
};

namespace detail {

inline double lc_log_likelihood(const std::vector<MatchRecord>& log, double b0,
                                double b1) {
  // sum_i y_i z_i - softplus(z_i), stable in z.
  double ll = 0.0;
  for (const MatchRecord& m : log) {
    const double z = b0 + b1 * m.len_diff;
    ll += (m.win ? z : 0.0) - softplus(z);
  }
  return ll;
}

}  // namespace detail

// Coefficients with |b| above this are treated as perfect separation.
inline constexpr double kLcSeparationBound = 30.0;

inline LcFit fit_lc(const std::vector<MatchRecord>& match_log) {
  if (match_log.size() < 10) {
    throw std::invalid_argument("fit_lc needs at least 10 matches, got " +
                                std::to_string(match_log.size()));
  }
  const std::size_t n = match_log.size();
  LcFit fit;

  bool constant_feature = true;
  for (const MatchRecord& m : match_log) {
    if (m.len_diff != match_log.front().len_diff) {
      constant_feature = false;
      break;
    }
  }
  if (constant_feature) {
    long wins = 0;
    for (const MatchRecord& m : match_log) wins += m.win ? 1 : 0;
    const double p = static_cast<double>(wins) / static_cast<double>(n);
    const double clamped = std::clamp(p, 1e-12, 1.0 - 1e-12);
    fit.intercept = std::log(clamped / (1.0 - clamped));
    fit.length_coef = 0.0;
    fit.converged = true;
    fit.degenerate_feature = true;
    fit.diagnostic = "degenerate length feature; intercept-only fit";
    return fit;
  }

  double b0 = 0.0, b1 = 0.0;
  double ll = detail::lc_log_likelihood(match_log, b0, b1);
  const double tol = 1e-10;  // on the mean-gradient norm
  bool converged = false;
  int iter = 0;
  double h00 = 0.0, h01 = 0.0, h11 = 0.0;
  for (; iter < 100; ++iter) {
    double g0 = 0.0, g1 = 0.0;
    h00 = h01 = h11 = 0.0;
    for (const MatchRecord& m : match_log) {
      const double z = b0 + b1 * m.len_diff;
      const double p = sigmoid(z);
      const double r = (m.win ? 1.0 : 0.0) - p;
      const double w = sigmoid_deriv(z);
      g0 += r;
      g1 += r * m.len_diff;
      h00 += w;
      h01 += w * m.len_diff;
      h11 += w * m.len_diff * m.len_diff;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (std::sqrt(g0 * g0 + g1 * g1) * inv_n <= tol) {
      converged = true;
      break;
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(std::abs(det) > 1e-300)) {
      fit.diagnostic = "singular Hessian";
      break;
    }
    double s0 = (h11 * g0 - h01 * g1) / det;
    double s1 = (h00 * g1 - h01 * g0) / det;
    // Step halving until the log-likelihood does not decrease. Near the
    // optimum the true improvement per step falls below the resolution of
    // ll itself, so "worse" is judged against an ll-scaled slack; otherwise
    // rounding noise would veto the final Newton steps.
    const double ll_slack = 1e-13 * (1.0 + std::abs(ll));
    double lambda = 1.0;
    double next_ll = detail::lc_log_likelihood(match_log, b0 + s0, b1 + s1);
    while (next_ll < ll - ll_slack && lambda > 1e-8) {
      lambda *= 0.5;
      next_ll = detail::lc_log_likelihood(match_log, b0 + lambda * s0,
                                          b1 + lambda * s1);
    }
    b0 += lambda * s0;
    b1 += lambda * s1;
    ll = next_ll;
  }

  fit.iterations = iter;
  fit.converged = converged;
  fit.intercept = b0;
  fit.length_coef = b1;
  if (std::abs(b0) > kLcSeparationBound ||
      std::abs(b1) > kLcSeparationBound) {
    fit.converged = false;
    fit.intercept = std::clamp(b0, -kLcSeparationBound, kLcSeparationBound);
    fit.length_coef = std::clamp(b1, -kLcSeparationBound, kLcSeparationBound);
    fit.diagnostic = "perfect separation suspected; coefficients clamped";
  }
  // Standard errors from the observed information at the reported fit.
  const double det = h00 * h11 - h01 * h01;
  if (det > 0.0) {
    fit.se_intercept = std::sqrt(h11 / det);
    fit.se_length_coef = std::sqrt(h00 / det);
  }
  return fit;
}

inline double lc_win_rate(const LcFit& fit, double win_rate) {
  return fit.degenerate_feature ? win_rate : sigmoid(fit.intercept);
}

struct LengthBucket {
  double lo = 0.0;
  double hi = 0.0;
  double active_fraction = 0.0;
  long count = 0;
};

namespace detail {

template <typename ActiveFn>
std::vector<LengthBucket> bucketize_pairs(const PreferenceDataset& dataset,
                                          const World& world, int buckets,
                                          ActiveFn&& pair_is_active) {
  if (buckets < 1) throw std::invalid_argument("buckets must be >= 1");
  if (dataset.records.empty()) {
    throw std::invalid_argument("dataset must be nonempty");
  }
  const std::size_t n = dataset.records.size();
  std::vector<double> diffs(n);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    const PrefRecord& rec = dataset.records[i];
    diffs[i] = world.norm_length(rec.prompt, rec.winner) -
               world.norm_length(rec.prompt, rec.loser);
    lo = std::min(lo, diffs[i]);
    hi = std::max(hi, diffs[i]);
  }
  const double width = (hi - lo) / buckets;
  std::vector<LengthBucket> out(buckets);
  for (int b = 0; b < buckets; ++b) {
    out[b].lo = lo + b * width;
    out[b].hi = b + 1 == buckets ? hi : lo + (b + 1) * width;
  }
  std::vector<long> active(buckets, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int b = width > 0.0 ? static_cast<int>((diffs[i] - lo) / width) : 0;
    b = std::clamp(b, 0, buckets - 1);
    out[b].count += 1;
    if (pair_is_active(i)) active[b] += 1;
  }
  for (int b = 0; b < buckets; ++b) {
    out[b].active_fraction =
        out[b].count > 0
            ? static_cast<double>(active[b]) / static_cast<double>(out[b].count)
            : 0.0;
  }
  return out;
}

}  // namespace detail

// Buckets pairs by winner-minus-loser normalized length difference and
// reports, per bucket, the fraction still emitting any gradient under the
// given pairwise objective at the current policy.
inline std::vector<LengthBucket> active_fraction_by_length(
    const PreferenceDataset& dataset, const World& world,
    const PolicyTable& policy, const ObjectiveConfig& objective, int buckets) {
  objective.validate();
  return detail::bucketize_pairs(
      dataset, world, buckets, [&](std::size_t i) {
        const PrefRecord& rec = dataset.records[i];
        const PairLogRatios pair{log_ratio(policy, rec.prompt, rec.winner),
                                 log_ratio(policy, rec.prompt, rec.loser)};
        const LossGrad lg = evaluate_objective(pair, objective);
        return lg.d_rho_w != 0.0 || lg.d_rho_l != 0.0;
      });
}

// AOT counterpart: the whole dataset is treated as one batch and a pair is
// active when its routed gradient is nonzero.
inline std::vector<LengthBucket> active_fraction_by_length(
    const PreferenceDataset& dataset, const World& world,
    const PolicyTable& policy, const AotConfig& objective, int buckets) {
  objective.validate();
  const std::size_t n = dataset.records.size();
  AotBatch batch;
  batch.u.reserve(n);
  batch.v.reserve(n);
  const bool pin_rejected =
      objective.reject_side == AotRejectSide::reference_zero;
  for (const PrefRecord& rec : dataset.records) {
    batch.u.push_back(log_ratio(policy, rec.prompt, rec.winner));
    batch.v.push_back(pin_rejected
                          ? 0.0
                          : log_ratio(policy, rec.prompt, rec.loser));
  }
  const AotResult res = aot_batch_loss(batch, objective);
  return detail::bucketize_pairs(
      dataset, world, buckets, [&](std::size_t i) {
        const double gv = pin_rejected ? 0.0 : res.grad_v[i];
        return res.grad_u[i] != 0.0 || gv != 0.0;
      });
}

struct EvalReport {
  double win_rate = 0.0;
  double lc_win_rate = 0.0;
  long n_matches = 0;
  LcFit lc;
  std::vector<LengthBucket> length_buckets;

  double win_rate_se() const {
    return std::sqrt(win_rate * (1.0 - win_rate) /
                     static_cast<double>(n_matches));
  }
};

}  // namespace prefopt
