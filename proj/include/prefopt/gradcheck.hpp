// Central-finite-difference verification of analytic gradients.
//
// Points are sampled over a per-configuration radius and two kinds of points
// are excluded, with separate counters:
//   * kink-adjacent points: within 1e-4 of a hinge/truncation boundary in
//     that objective's natural argument space, where the subgradient
//     convention makes the finite difference meaningless;
//   * roundoff-dominated points: where the finite difference of the loss at
//     step h = 1e-5 cannot resolve the requested relative tolerance because
//     the quotient noise eps_mach * |loss| / (2h) exceeds a tenth of the
//     allowed error. Skipping is based on max(|analytic|, |fd|), so a
//     sign-flipped or zeroed gradient is still caught.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prefopt/aot.hpp"
#include "prefopt/math.hpp"
#include "prefopt/objectives.hpp"

namespace prefopt {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTolerance = 1e-6;
inline constexpr double kKinkExclusion = 1e-4;

struct GradCheckReport {
  std::string name;
  double worst_rel_err = 0.0;
  long points_checked = 0;
  long points_skipped_kink = 0;
  long points_skipped_noise = 0;
  bool pass = true;
};

using PairKernel =
    std::function<LossGrad(const PairLogRatios&, const ObjectiveConfig&)>;

namespace detail {

inline double fd_rel_err(double analytic, double fd, double loss_scale,
                         bool* resolvable) {
  const double ref = std::max({std::abs(analytic), std::abs(fd), 1e-8});
  const double noise =
      std::numeric_limits<double>::epsilon() * loss_scale / (2.0 * kFdStep);
  *resolvable = noise <= 0.1 * kFdRelTolerance *
                             std::max({std::abs(analytic), std::abs(fd),
                                       1e-12});
  return std::abs(analytic - fd) / ref;
}

// Distance to the nearest non-smooth point in the objective's argument
// space; infinity for smooth objectives.
inline double kink_distance(const PairLogRatios& pair,
                            const ObjectiveConfig& cfg) {
  const double inf = std::numeric_limits<double>::infinity();
  switch (cfg.kind) {
    case ObjectiveKind::dpo_hinge:
      return std::abs(cfg.alpha - cfg.beta * pair.delta_r());
    case ObjectiveKind::apo_hinge_zero:
      return std::min(std::abs(cfg.margin - cfg.beta * pair.rho_w),
                      std::abs(cfg.margin + cfg.beta * pair.rho_l));
    case ObjectiveKind::margin_sigmoid: {
      const double z = cfg.beta * pair.delta_r();
      return std::min(std::abs(softplus(-z) - cfg.delta),
                      std::abs(softplus(z) - cfg.delta));
    }
    default:
      return inf;
  }
}

}  // namespace detail

// A pinned (config, sampling radius) sweep per objective kind. Radii keep
// the hinge thresholds m/beta and alpha/beta inside the sampled range.
struct GradCheckCase {
  ObjectiveConfig cfg;
  double radius = 10.0;
};

inline std::vector<GradCheckCase> gradcheck_cases(ObjectiveKind kind) {
  auto base = [kind](double beta) {
    ObjectiveConfig c;
    c.kind = kind;
    c.beta = beta;
    return c;
  };
  std::vector<GradCheckCase> cases;
  switch (kind) {
    case ObjectiveKind::dpo:
      cases = {{base(0.1), 20.0}, {base(0.5), 8.0}, {base(2.0), 3.0}};
      break;
    case ObjectiveKind::cdpo: {
      auto c1 = base(0.1);
      c1.epsilon = 0.1;
      auto c2 = base(0.5);
      c2.epsilon = 0.3;
      auto c3 = base(0.1);
      cases = {{c1, 20.0}, {c2, 8.0}, {c3, 20.0}};
      break;
    }
    case ObjectiveKind::dpo_hinge: {
      auto c1 = base(0.1);
      auto c2 = base(0.5);
      c2.alpha = 0.5;
      auto c3 = base(1.0);
      c3.alpha = 2.0;
      cases = {{c1, 30.0}, {c2, 6.0}, {c3, 6.0}};
      break;
    }
    case ObjectiveKind::apo_zero:
    case ObjectiveKind::apo_down:
      cases = {{base(0.1), 20.0}, {base(0.5), 8.0}, {base(2.0), 3.0}};
      break;
    case ObjectiveKind::apo_hinge_zero: {
      auto c1 = base(0.1);
      auto c2 = base(0.5);
      auto c3 = base(0.2);
      c3.margin = 0.5;
      cases = {{c1, 30.0}, {c2, 6.0}, {c3, 8.0}};
      break;
    }
    case ObjectiveKind::apo_hinge_softplus: {
      auto c1 = base(0.1);
      auto c2 = base(0.5);
      c2.tau = 0.5;
      auto c3 = base(0.3);
      c3.margin = 2.0;
      c3.tau = 2.0;
      cases = {{c1, 30.0}, {c2, 6.0}, {c3, 10.0}};
      break;
    }
    case ObjectiveKind::margin_sigmoid: {
      auto c1 = base(0.1);
      auto c2 = base(0.1);
      c2.epsilon = 0.1;
      c2.delta = 0.3;
      auto c3 = base(0.5);
      c3.epsilon = 0.2;
      c3.delta = 0.5;
      c3.gamma = 2.0;
      auto c4 = base(0.3);
      c4.delta = 0.2;
      c4.gamma = 0.5;
      cases = {{c1, 20.0}, {c2, 20.0}, {c3, 8.0}, {c4, 10.0}};
      break;
    }
  }
  return cases;
}

// Checks `kernel` against central finite differences of its own loss at
// `trials` random points, cycling through the pinned config sweep for
// `kind`. The kernel under test supplies both the loss and the gradients,
// so a corrupted gradient is caught by the FD of its own loss values.
inline GradCheckReport gradcheck_pair_kernel(const std::string& name,
                                             const PairKernel& kernel,
                                             ObjectiveKind kind, long trials,
                                             std::uint64_t seed) {
  GradCheckReport report;
  report.name = name;
  const auto cases = gradcheck_cases(kind);
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(kind)));
  long produced = 0;
  long attempts = 0;
  const long max_attempts = trials * 50 + 1000;
  while (produced < trials && attempts < max_attempts) {
    ++attempts;
    const GradCheckCase& gc = cases[attempts % cases.size()];
    PairLogRatios pair{(2.0 * uniform01(rng) - 1.0) * gc.radius,
                       (2.0 * uniform01(rng) - 1.0) * gc.radius};
    if (detail::kink_distance(pair, gc.cfg) < kKinkExclusion) {
      ++report.points_skipped_kink;
      continue;
    }
    const LossGrad center = kernel(pair, gc.cfg);
    const auto probe = [&](double dw, double dl) {
      return kernel({pair.rho_w + dw, pair.rho_l + dl}, gc.cfg).loss;
    };
    const double lw_hi = probe(kFdStep, 0.0);
    const double lw_lo = probe(-kFdStep, 0.0);
    const double ll_hi = probe(0.0, kFdStep);
    const double ll_lo = probe(0.0, -kFdStep);
    const double loss_scale = std::max(
        {std::abs(center.loss), std::abs(lw_hi), std::abs(lw_lo),
         std::abs(ll_hi), std::abs(ll_lo), 1.0});
    const double fd_w = (lw_hi - lw_lo) / (2.0 * kFdStep);
    const double fd_l = (ll_hi - ll_lo) / (2.0 * kFdStep);
    bool res_w = false, res_l = false;
    const double err_w =
        detail::fd_rel_err(center.d_rho_w, fd_w, loss_scale, &res_w);
    const double err_l =
        detail::fd_rel_err(center.d_rho_l, fd_l, loss_scale, &res_l);
    if (!res_w && !res_l) {
      ++report.points_skipped_noise;
      continue;
    }
    ++produced;
    ++report.points_checked;
    if (res_w) report.worst_rel_err = std::max(report.worst_rel_err, err_w);
    if (res_l) report.worst_rel_err = std::max(report.worst_rel_err, err_l);
  }
  report.pass = report.points_checked > 0 &&
                report.worst_rel_err <= kFdRelTolerance;
  return report;
}

// Finite differences through the AOT batch loss, one coordinate at a time.
// Batches with near-ties (sort order unstable under the probe step) are
// redrawn, as are squared-hinge points near the kink.
inline GradCheckReport gradcheck_aot(const AotConfig& cfg, long trials,
                                     std::uint64_t seed) {
  GradCheckReport report;
  report.name = std::string("aot_") + to_string(cfg.surrogate);
  std::mt19937_64 rng(derive_seed(seed, 0xA07));
  long produced = 0;
  long attempts = 0;
  const long max_attempts = trials * 50 + 1000;
  while (produced < trials && attempts < max_attempts) {
    ++attempts;
    const int n = 2 + static_cast<int>(uniform01(rng) * 5.0);
    AotBatch batch;
    for (int i = 0; i < n; ++i) {
      batch.u.push_back((2.0 * uniform01(rng) - 1.0) * 8.0);
      batch.v.push_back((2.0 * uniform01(rng) - 1.0) * 8.0);
    }
    const auto min_gap = [](std::vector<double> xs) {
      std::sort(xs.begin(), xs.end());
      double gap = std::numeric_limits<double>::infinity();
      for (std::size_t i = 1; i < xs.size(); ++i) {
        gap = std::min(gap, xs[i] - xs[i - 1]);
      }
      return gap;
    };
    if (min_gap(batch.u) < kKinkExclusion || min_gap(batch.v) < kKinkExclusion) {
      ++report.points_skipped_kink;
      continue;
    }
    if (cfg.surrogate == AotSurrogate::squared_hinge) {
      auto su = batch.u;
      auto sv = batch.v;
      std::sort(su.begin(), su.end());
      std::sort(sv.begin(), sv.end());
      bool near_kink = false;
      for (int i = 0; i < n; ++i) {
        if (std::abs(cfg.alpha - (su[i] - sv[i])) < kKinkExclusion) {
          near_kink = true;
          break;
        }
      }
      if (near_kink) {
        ++report.points_skipped_kink;
        continue;
      }
    }
    const AotResult center = aot_batch_loss(batch, cfg);
    bool counted = false;
    for (int side = 0; side < 2; ++side) {
      auto& xs = side == 0 ? batch.u : batch.v;
      const auto& grads = side == 0 ? center.grad_u : center.grad_v;
      for (int j = 0; j < n; ++j) {
        const double keep = xs[j];
        xs[j] = keep + kFdStep;
        const double hi = aot_batch_loss(batch, cfg).loss;
        xs[j] = keep - kFdStep;
        const double lo = aot_batch_loss(batch, cfg).loss;
        xs[j] = keep;
        const double fd = (hi - lo) / (2.0 * kFdStep);
        const double loss_scale =
            std::max({std::abs(center.loss), std::abs(hi), std::abs(lo), 1.0});
        bool resolvable = false;
        const double err =
            detail::fd_rel_err(grads[j], fd, loss_scale, &resolvable);
        if (resolvable) {
          report.worst_rel_err = std::max(report.worst_rel_err, err);
          counted = true;
        }
      }
    }
    if (counted) {
      ++produced;
      ++report.points_checked;
    } else {
      ++report.points_skipped_noise;
    }
  }
  report.pass = report.points_checked > 0 &&
                report.worst_rel_err <= kFdRelTolerance;
  return report;
}

inline std::vector<ObjectiveKind> all_objective_kinds() {
  return {ObjectiveKind::dpo,          ObjectiveKind::cdpo,
          ObjectiveKind::dpo_hinge,    ObjectiveKind::apo_zero,
          ObjectiveKind::apo_down,     ObjectiveKind::apo_hinge_zero,
          ObjectiveKind::apo_hinge_softplus,
          ObjectiveKind::margin_sigmoid};
}

// The full suite: every pairwise kernel plus both AOT surrogates.
inline std::vector<GradCheckReport> gradcheck_all(
    const std::vector<ObjectiveKind>& kinds, long trials, std::uint64_t seed) {
  std::vector<GradCheckReport> reports;
  for (ObjectiveKind kind : kinds) {
    reports.push_back(gradcheck_pair_kernel(
        to_string(kind),
        [](const PairLogRatios& p, const ObjectiveConfig& c) {
          return evaluate_objective(p, c);
        },
        kind, trials, seed));
  }
  AotConfig logistic;
  AotConfig squared;
  squared.surrogate = AotSurrogate::squared_hinge;
  reports.push_back(gradcheck_aot(logistic, trials, seed));
  reports.push_back(gradcheck_aot(squared, trials, seed));
  return reports;
}

}  // namespace prefopt
