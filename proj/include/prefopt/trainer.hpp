// Deterministic training loop over preference pairs.
//
// One optimizer step consumes accumulation_steps * batch_size pairs (the
// trailing group may be shorter; losses and gradients are averaged over the
// actual pair count). Pairwise objectives average per-pair LossGrad over the
// group; the AOT objective computes one batch-level loss per micro-batch of
// batch_size pairs and the group mean is pair-weighted. All randomness
// (initial perturbation, per-epoch shuffles) derives from TrainConfig::seed,
// so identical inputs give bit-identical telemetry and final tables.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
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

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}
inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer: \"" + s + "\"");
}

// Linear ramp of the margin_sigmoid truncation threshold, in epochs.
struct DeltaSchedule {
  double delta_start = 0.0;
  double delta_end = 0.0;
  double ramp_epochs = 1.0;

  void validate() const {
    require_finite(delta_start, "delta_start");
    require_finite(delta_end, "delta_end");
    require_finite(ramp_epochs, "ramp_epochs");
    if (delta_start < 0.0 || delta_end < 0.0) {
      throw std::invalid_argument("delta schedule values must be >= 0");
    }
    if (!(ramp_epochs > 0.0)) {
      throw std::invalid_argument("ramp_epochs must be > 0");
    }
  }
};

inline double delta_at(const DeltaSchedule& schedule, double epoch_fraction) {
  if (!(epoch_fraction >= 0.0)) {
    throw std::invalid_argument("epoch_fraction must be >= 0");
  }
  if (epoch_fraction >= schedule.ramp_epochs) return schedule.delta_end;
  return schedule.delta_start + (schedule.delta_end - schedule.delta_start) *
                                    (epoch_fraction / schedule.ramp_epochs);
}

// Either a pairwise kernel or the batch-level AOT loss.
struct TrainObjective {
  bool is_aot = false;
  ObjectiveConfig pairwise;
  AotConfig aot;

  void validate() const {
    if (is_aot) {
      aot.validate();
    } else {
      pairwise.validate();
    }
  }
  std::string name() const {
    return is_aot ? "aot" : to_string(pairwise.kind);
  }
};

struct TrainConfig {
  TrainObjective objective;
  int epochs = 3;
  int batch_size = 8;
  int accumulation_steps = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::optional<DeltaSchedule> delta_schedule;
  bool shuffle = true;
  double init_perturb_std = 0.0;  // Gaussian jitter on the initial logits

  void validate() const {
    objective.validate();
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (accumulation_steps < 1) {
      throw std::invalid_argument("accumulation_steps must be >= 1");
    }
    require_finite(learning_rate, "learning_rate");
    if (learning_rate < 0.0) {
      throw std::invalid_argument("learning_rate must be >= 0");
    }
    require_finite(adam_beta1, "adam_beta1");
    require_finite(adam_beta2, "adam_beta2");
    require_finite(adam_eps, "adam_eps");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw std::invalid_argument("adam betas must be in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be > 0");
    require_finite(init_perturb_std, "init_perturb_std");
    if (init_perturb_std < 0.0) {
      throw std::invalid_argument("init_perturb_std must be >= 0");
    }
    if (delta_schedule) delta_schedule->validate();
  }
};

struct StepTelemetry {
  long step = 0;            // 1-based optimizer step index
  double mean_loss = 0.0;   // group mean loss
  double active_fraction = 0.0;  // pairs with any nonzero gradient component
  double mean_delta_r = 0.0;
  // Pairs whose loss and gradient are both exactly zero: the configured
  // margin is fully satisfied. Identically 0 for the smooth objectives.
  double margin_satisfied_fraction = 0.0;
};

inline void write_telemetry_csv(std::ostream& out,
                                const std::vector<StepTelemetry>& telemetry) {
  out << "step,mean_loss,active_fraction,mean_delta_r,"
         "margin_satisfied_fraction\n";
  for (const StepTelemetry& t : telemetry) {
    out << t.step << ',' << format_double(t.mean_loss) << ','
        << format_double(t.active_fraction) << ','
        << format_double(t.mean_delta_r) << ','
        << format_double(t.margin_satisfied_fraction) << '\n';
  }
}

struct TrainResult {
  PolicyTable policy;
  std::vector<StepTelemetry> telemetry;
  std::vector<std::string> warnings;
  long steps_per_epoch = 0;
};

namespace detail {

constexpr std::uint64_t kInitPerturbStream = 11;
constexpr std::uint64_t kShuffleStreamBase = 1000;

struct Optimizer {
  OptimizerKind kind;
  double lr, beta1, beta2, eps;
  Mat<double> m, v;
  long t = 0;

  Optimizer(const TrainConfig& cfg, int rows, int cols)
      : kind(cfg.optimizer),
        lr(cfg.learning_rate),
        beta1(cfg.adam_beta1),
        beta2(cfg.adam_beta2),
        eps(cfg.adam_eps),
        m(rows, cols, 0.0),
        v(rows, cols, 0.0) {}

  void step(Mat<double>& theta, const Mat<double>& grad) {
    if (kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < theta.data.size(); ++i) {
        theta.data[i] -= lr * grad.data[i];
      }
      return;
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      const double g = grad.data[i];
      m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
      v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      theta.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
};

struct GroupStats {
  double loss_sum = 0.0;     // pair-weighted
  double delta_r_sum = 0.0;
  long active = 0;
  long satisfied = 0;
  long pairs = 0;
};

// Sorted positions whose surrogate value and derivative are both exactly
// zero; the AOT counterpart of a fully satisfied pair.
inline long count_satisfied_positions(const AotBatch& batch,
                                      const AotConfig& cfg) {
  const auto order_u = ascending_order(batch.u);
  const auto order_v = ascending_order(batch.v);
  long satisfied = 0;
  for (std::size_t i = 0; i < batch.u.size(); ++i) {
    double h = 0.0, dh = 0.0;
    aot_surrogate_eval(cfg, batch.u[order_u[i]] - batch.v[order_v[i]], &h,
                       &dh);
    if (h == 0.0 && dh == 0.0) ++satisfied;
  }
  return satisfied;
}

inline void check_dataset_against_world(const PreferenceDataset& dataset,
                                        const World& world) {
  if (dataset.records.empty()) {
    throw std::invalid_argument("dataset must be nonempty");
  }
  for (const PrefRecord& rec : dataset.records) {
    if (rec.prompt < 0 || rec.prompt >= world.num_prompts ||
        rec.winner < 0 || rec.winner >= world.num_responses ||
        rec.loser < 0 || rec.loser >= world.num_responses) {
      throw std::out_of_range("dataset record out of world bounds");
    }
    if (rec.winner == rec.loser) {
      throw std::invalid_argument("dataset contains a degenerate pair");
    }
  }
}

}  // namespace detail

inline TrainResult train(
    const World& world, const PreferenceDataset& dataset,
    const TrainConfig& cfg,
    const std::function<void(int, const PolicyTable&)>& on_epoch_end = {}) {
  cfg.validate();
  detail::check_dataset_against_world(dataset, world);

  TrainResult result;
  if (cfg.objective.is_aot && cfg.batch_size < 2) {
    result.warnings.push_back(
        "aot with batch_size < 2 degenerates to a pairwise surrogate");
  }
  if (cfg.delta_schedule &&
      !(!cfg.objective.is_aot &&
        cfg.objective.pairwise.kind == ObjectiveKind::margin_sigmoid)) {
    result.warnings.push_back(
        "delta_schedule only affects margin_sigmoid; ignored for " +
        cfg.objective.name());
  }

  result.policy.logits = world.ref_logits;
  result.policy.ref_logits = world.ref_logits;
  if (cfg.init_perturb_std > 0.0) {
    std::mt19937_64 rng(derive_seed(cfg.seed, detail::kInitPerturbStream));
    std::normal_distribution<double> dist(0.0, cfg.init_perturb_std);
    for (double& v : result.policy.logits.data) v += dist(rng);
  }
  PolicyTable& policy = result.policy;

  const long n_pairs = static_cast<long>(dataset.records.size());
  const long group_size =
      static_cast<long>(cfg.batch_size) * cfg.accumulation_steps;
  result.steps_per_epoch = (n_pairs + group_size - 1) / group_size;

  GradBuffer buffer(world.num_prompts, world.num_responses);
  detail::Optimizer optimizer(cfg, world.num_prompts, world.num_responses);

  std::vector<long> order(n_pairs);
  for (long i = 0; i < n_pairs; ++i) order[i] = i;

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      std::mt19937_64 rng(
          derive_seed(cfg.seed, detail::kShuffleStreamBase + epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (long begin = 0; begin < n_pairs; begin += group_size) {
      const long end = std::min(begin + group_size, n_pairs);
      const long group_pairs = end - begin;
      const double epoch_fraction =
          epoch + static_cast<double>(begin) / static_cast<double>(n_pairs);

      ObjectiveConfig pair_cfg = cfg.objective.pairwise;
      if (!cfg.objective.is_aot &&
          pair_cfg.kind == ObjectiveKind::margin_sigmoid &&
          cfg.delta_schedule) {
        pair_cfg.delta = delta_at(*cfg.delta_schedule, epoch_fraction);
      }

      buffer.reset();
      detail::GroupStats stats;
      stats.pairs = group_pairs;
      const double inv_group = 1.0 / static_cast<double>(group_pairs);

      for (long micro = begin; micro < end;
           micro += static_cast<long>(cfg.batch_size)) {
        const long micro_end =
            std::min(micro + static_cast<long>(cfg.batch_size), end);
        if (!cfg.objective.is_aot) {
          for (long k = micro; k < micro_end; ++k) {
            const PrefRecord& rec = dataset.records[order[k]];
            const PairLogRatios pair{log_ratio(policy, rec.prompt, rec.winner),
                                     log_ratio(policy, rec.prompt, rec.loser)};
            const LossGrad lg = evaluate_objective(pair, pair_cfg);
            accumulate_pair_grad(policy, buffer, rec.prompt, rec.winner,
                                 rec.loser, inv_group * lg.d_rho_w,
                                 inv_group * lg.d_rho_l);
            stats.loss_sum += lg.loss;
            stats.delta_r_sum += pair.delta_r();
            if (lg.d_rho_w != 0.0 || lg.d_rho_l != 0.0) ++stats.active;
            if (lg.loss == 0.0 && lg.d_rho_w == 0.0 && lg.d_rho_l == 0.0) {
              ++stats.satisfied;
            }
          }
        } else {
          const long nb = micro_end - micro;
          AotBatch batch;
          batch.u.reserve(nb);
          batch.v.reserve(nb);
          const bool pin_rejected =
              cfg.objective.aot.reject_side == AotRejectSide::reference_zero;
          for (long k = micro; k < micro_end; ++k) {
            const PrefRecord& rec = dataset.records[order[k]];
            batch.u.push_back(log_ratio(policy, rec.prompt, rec.winner));
            batch.v.push_back(
                pin_rejected ? 0.0
                             : log_ratio(policy, rec.prompt, rec.loser));
          }
          const AotResult res = aot_batch_loss(batch, cfg.objective.aot);
          // Re-weight the micro-batch mean into the group mean.
          const double scale = static_cast<double>(nb) * inv_group;
          stats.loss_sum += res.loss * static_cast<double>(nb);
          for (long k = micro; k < micro_end; ++k) {
            const long i = k - micro;
            const PrefRecord& rec = dataset.records[order[k]];
            const double gu = scale * res.grad_u[i];
            const double gv = pin_rejected ? 0.0 : scale * res.grad_v[i];
            accumulate_pair_grad(policy, buffer, rec.prompt, rec.winner,
                                 rec.loser, gu, gv);
            stats.delta_r_sum += batch.u[i] - batch.v[i];
            if (gu != 0.0 || gv != 0.0) ++stats.active;
          }
          stats.satisfied +=
              detail::count_satisfied_positions(batch, cfg.objective.aot);
        }
      }

      optimizer.step(policy.logits, buffer.grads);
      ++step;
      StepTelemetry t;
      t.step = step;
      t.mean_loss = stats.loss_sum * inv_group;
      t.active_fraction =
          static_cast<double>(stats.active) / static_cast<double>(group_pairs);
      t.mean_delta_r = stats.delta_r_sum * inv_group;
      t.margin_satisfied_fraction = static_cast<double>(stats.satisfied) /
                                    static_cast<double>(group_pairs);
      result.telemetry.push_back(t);
    }
    if (on_epoch_end) on_epoch_end(epoch, policy);
  }
  return result;
}

}  // namespace prefopt
