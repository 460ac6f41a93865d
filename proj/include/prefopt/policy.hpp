// Tabular softmax policy over a finite response set per prompt, paired with
// a frozen reference table. Log-probabilities use the log-sum-exp trick, so
// log-ratios and parameter gradients are exact up to rounding.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefopt/math.hpp"
#include "prefopt/matrix.hpp"

namespace prefopt {

enum class PolicySide { policy, reference };

struct PolicyTable {
  Mat<double> logits;      // trainable
  Mat<double> ref_logits;  // frozen

  int num_prompts() const { return logits.rows; }
  int num_responses() const { return logits.cols; }

  void validate() const {
    if (!logits.same_shape(ref_logits)) {
      throw std::invalid_argument("policy and reference shapes differ");
    }
    for (double v : logits.data) require_finite(v, "logits");
    for (double v : ref_logits.data) require_finite(v, "ref_logits");
  }
};

namespace detail {

inline void check_prompt(const PolicyTable& table, int x) {
  if (x < 0 || x >= table.num_prompts()) {
    throw std::out_of_range("prompt index out of range: " + std::to_string(x));
  }
}

inline void check_response(const PolicyTable& table, int y,
                           const char* name) {
  if (y < 0 || y >= table.num_responses()) {
    throw std::out_of_range(std::string(name) + " out of range: " +
                            std::to_string(y));
  }
}

}  // namespace detail

inline void softmax_row(std::span<const double> logits,
                        std::span<double> probs) {
  const double lse = log_sum_exp(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - lse);
  }
}

inline double log_prob(const PolicyTable& table, int x, int y,
                       PolicySide which) {
  detail::check_prompt(table, x);
  detail::check_response(table, y, "response index");
  const auto row = which == PolicySide::policy ? table.logits.row(x)
                                               : table.ref_logits.row(x);
  return row[y] - log_sum_exp(row);
}

// ln pi_theta(y|x) - ln pi_ref(y|x); the unscaled implicit reward.
inline double log_ratio(const PolicyTable& table, int x, int y) {
  return log_prob(table, x, y, PolicySide::policy) -
         log_prob(table, x, y, PolicySide::reference);
}

struct GradBuffer {
  Mat<double> grads;
  long accumulated_pairs = 0;

  explicit GradBuffer(int rows = 0, int cols = 0) : grads(rows, cols, 0.0) {}

  void reset() {
    grads.fill(0.0);
    accumulated_pairs = 0;
  }
};

// Chain rule from per-pair loss derivatives into the logit table:
//   d rho(y) / d theta[x][y'] = 1[y' = y] - pi_theta(y'|x)
// The contribution of any single pair sums to zero over a row.
inline void accumulate_pair_grad(const PolicyTable& table, GradBuffer& buffer,
                                 int x, int y_w, int y_l, double d_rho_w,
                                 double d_rho_l) {
  detail::check_prompt(table, x);
  detail::check_response(table, y_w, "y_w");
  detail::check_response(table, y_l, "y_l");
  if (y_w == y_l) {
    throw std::invalid_argument("degenerate pair: y_w == y_l == " +
                                std::to_string(y_w));
  }
  if (!buffer.grads.same_shape(table.logits)) {
    throw std::invalid_argument("gradient buffer shape mismatch");
  }
  const int cols = table.num_responses();
  std::vector<double> probs(cols);
  softmax_row(table.logits.row(x), probs);
  for (int y = 0; y < cols; ++y) {
    const double ind_w = y == y_w ? 1.0 : 0.0;
    const double ind_l = y == y_l ? 1.0 : 0.0;
    buffer.grads(x, y) +=
        d_rho_w * (ind_w - probs[y]) + d_rho_l * (ind_l - probs[y]);
  }
  buffer.accumulated_pairs += 1;
}

// Categorical draw from the softmax row. The cumulative walk runs in
// descending-probability order (ties by index), which makes the draw
// equivariant under response relabeling whenever probabilities are distinct.
inline int sample_response(const PolicyTable& table, int x,
                           std::mt19937_64& rng, PolicySide which) {
  detail::check_prompt(table, x);
  const auto row = which == PolicySide::policy ? table.logits.row(x)
                                               : table.ref_logits.row(x);
  const int n = static_cast<int>(row.size());
  std::vector<double> probs(n);
  softmax_row(row, probs);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  const double u = uniform01(rng);
  double cum = 0.0;
  for (int k = 0; k < n; ++k) {
    cum += probs[order[k]];
    if (u < cum) return order[k];
  }
  return order.back();
}

}  // namespace prefopt
