// Batch-level distributional alignment: one-dimensional optimal-transport
// cost between the empirical chosen-side and rejected-side reward measures.
//
// For equal-size samples the OT plan is the sorted pairing, so the loss is
//   (1/n) * sum_i h(u_(i) - v_(i))
// with u_(i), v_(i) the ascending order statistics. Gradients are routed back
// through the sort permutation, which is treated as locally constant (the
// standard subdifferential of a piecewise-smooth composition). Sorting is
// stable on (value, original index), so exact ties pair deterministically.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefopt/math.hpp"

namespace prefopt {

enum class AotSurrogate { logistic, squared_hinge };
enum class AotRejectSide { policy, reference_zero };

inline const char* to_string(AotSurrogate s) {
  return s == AotSurrogate::logistic ? "logistic" : "squared_hinge";
}
inline const char* to_string(AotRejectSide s) {
  return s == AotRejectSide::policy ? "policy" : "reference_zero";
}

inline AotSurrogate aot_surrogate_from_string(const std::string& s) {
  if (s == "logistic") return AotSurrogate::logistic;
  if (s == "squared_hinge") return AotSurrogate::squared_hinge;
  throw std::invalid_argument("unknown aot surrogate: \"" + s + "\"");
}
inline AotRejectSide aot_reject_side_from_string(const std::string& s) {
  if (s == "policy") return AotRejectSide::policy;
  if (s == "reference_zero") return AotRejectSide::reference_zero;
  throw std::invalid_argument("unknown aot reject_side: \"" + s + "\"");
}

struct AotConfig {
  AotSurrogate surrogate = AotSurrogate::logistic;
  double beta = 0.1;   // scale inside the logistic surrogate
  double alpha = 1.0;  // margin of the squared hinge
  // Which log-ratios populate the rejected side when the trainer assembles a
  // batch: the policy's own, or constants pinned at 0 (the rejected side then
  // receives no gradient).
  AotRejectSide reject_side = AotRejectSide::policy;

  void validate() const {
    require_finite(beta, "aot beta");
    require_finite(alpha, "aot alpha");
    if (!(beta > 0.0)) {
      throw std::invalid_argument("aot beta must be > 0, got " +
                                  format_double(beta));
    }
    if (!(alpha > 0.0)) {
      throw std::invalid_argument("aot alpha must be > 0, got " +
                                  format_double(alpha));
    }
  }
};

// Unordered multisets of chosen-side (u) and rejected-side (v) log-ratios.
struct AotBatch {
  std::vector<double> u;
  std::vector<double> v;

  void validate() const {
    if (u.empty()) throw std::invalid_argument("aot batch must be nonempty");
    if (u.size() != v.size()) {
      throw std::invalid_argument(
          "aot batch size mismatch: |u| = " + std::to_string(u.size()) +
          ", |v| = " + std::to_string(v.size()));
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!std::isfinite(u[i])) {
        throw std::invalid_argument("u[" + std::to_string(i) +
                                    "] must be finite");
      }
      if (!std::isfinite(v[i])) {
        throw std::invalid_argument("v[" + std::to_string(i) +
                                    "] must be finite");
      }
    }
  }
};

struct AotResult {
  double loss = 0.0;
  std::vector<double> grad_u;
  std::vector<double> grad_v;
};

namespace detail {

// Surrogate value and derivative in the sorted-difference z = u_(i) - v_(i).
inline void aot_surrogate_eval(const AotConfig& cfg, double z, double* h,
                               double* dh) {
  if (cfg.surrogate == AotSurrogate::logistic) {
    const double a = cfg.beta * z;
    *h = softplus(-a);
    *dh = -cfg.beta * sigmoid(-a);
  } else {
    const double c = cfg.alpha - z;
    if (c > 0.0) {
      *h = c * c;
      *dh = -2.0 * c;
    } else {
      *h = 0.0;
      *dh = 0.0;
    }
  }
}

inline std::vector<int> ascending_order(const std::vector<double>& xs) {
  std::vector<int> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return xs[a] < xs[b]; });
  return idx;
}

}  // namespace detail

inline AotResult aot_batch_loss(const AotBatch& batch, const AotConfig& cfg) {
  batch.validate();
  cfg.validate();
  const std::size_t n = batch.u.size();
  const auto order_u = detail::ascending_order(batch.u);
  const auto order_v = detail::ascending_order(batch.v);

  AotResult out;
  out.grad_u.assign(n, 0.0);
  out.grad_v.assign(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int ju = order_u[i];
    const int jv = order_v[i];
    double h = 0.0, dh = 0.0;
    detail::aot_surrogate_eval(cfg, batch.u[ju] - batch.v[jv], &h, &dh);
    sum += h;
    out.grad_u[ju] = inv_n * dh;
    out.grad_v[jv] = -inv_n * dh;
  }
  out.loss = inv_n * sum;
  return out;
}

// Exhaustive minimum-assignment cost over all n! pairings; test oracle only.
// For convex non-increasing surrogates of the difference this equals the
// sorted pairing.
inline double aot_brute_force_oracle(const AotBatch& batch,
                                     const AotConfig& cfg) {
  batch.validate();
  cfg.validate();
  const std::size_t n = batch.u.size();
  if (n > 8) {
    throw std::invalid_argument(
        "brute-force oracle limited to n <= 8, got n = " + std::to_string(n));
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double h = 0.0, dh = 0.0;
      detail::aot_surrogate_eval(cfg, batch.u[i] - batch.v[perm[i]], &h, &dh);
      sum += h;
    }
    best = std::min(best, sum / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace prefopt
