// Pairwise preference-objective kernels.
//
// Every kernel is a pure function (PairLogRatios, ObjectiveConfig) -> LossGrad
// returning the loss in nats together with exact partial derivatives with
// respect to the two raw log-ratios. Conventions shared by all kernels:
//
//   * rho_w, rho_l are raw policy/reference log-ratios; beta is applied
//     exactly once, inside the kernel. Hinge saturation thresholds are
//     therefore at |rho| = margin / beta.
//   * at a hinge kink the subgradient 0 is returned (the saturated branch
//     wins ties), so gradients are deterministic and sparsity counts are
//     well defined at the boundary.
//   * -ln sigmoid(z) is evaluated as softplus(-z).
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "prefopt/math.hpp"

namespace prefopt {

enum class ObjectiveKind {
  dpo,
  cdpo,
  dpo_hinge,
  apo_zero,
  apo_down,
  apo_hinge_zero,
  apo_hinge_softplus,
  margin_sigmoid,
};

inline const char* to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::dpo: return "dpo";
    case ObjectiveKind::cdpo: return "cdpo";
    case ObjectiveKind::dpo_hinge: return "dpo_hinge";
    case ObjectiveKind::apo_zero: return "apo_zero";
    case ObjectiveKind::apo_down: return "apo_down";
    case ObjectiveKind::apo_hinge_zero: return "apo_hinge_zero";
    case ObjectiveKind::apo_hinge_softplus: return "apo_hinge_softplus";
    case ObjectiveKind::margin_sigmoid: return "margin_sigmoid";
  }
  throw std::invalid_argument("unknown objective kind");
}

inline ObjectiveKind objective_kind_from_string(const std::string& s) {
  if (s == "dpo") return ObjectiveKind::dpo;
  if (s == "cdpo") return ObjectiveKind::cdpo;
  if (s == "dpo_hinge") return ObjectiveKind::dpo_hinge;
  if (s == "apo_zero") return ObjectiveKind::apo_zero;
  if (s == "apo_down") return ObjectiveKind::apo_down;
  if (s == "apo_hinge_zero") return ObjectiveKind::apo_hinge_zero;
  if (s == "apo_hinge_softplus") return ObjectiveKind::apo_hinge_softplus;
  if (s == "margin_sigmoid") return ObjectiveKind::margin_sigmoid;
  throw std::invalid_argument("unknown objective kind: \"" + s + "\"");
}

// Raw log-ratios for one preference pair:
//   rho_w = ln pi_theta(y_w|x) / pi_ref(y_w|x)
//   rho_l = ln pi_theta(y_l|x) / pi_ref(y_l|x)
struct PairLogRatios {
  double rho_w = 0.0;
  double rho_l = 0.0;

  double delta_r() const { return rho_w - rho_l; }
};

struct LossGrad {
  double loss = 0.0;
  double d_rho_w = 0.0;
  double d_rho_l = 0.0;
};

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::dpo;
  double beta = 0.1;     // inverse temperature, scales the log-ratios
  double epsilon = 0.0;  // label smoothing, [0, 0.5)
  double alpha = 1.0;    // minimum-gap margin of dpo_hinge
  double margin = 1.0;   // per-side margin of the apo hinge family ("m")
  double tau = 1.0;      // softplus temperature of apo_hinge_softplus
  double gamma = 0.0;    // focal weight exponent of margin_sigmoid (0 = off)
  double delta = 0.0;    // loss truncation threshold of margin_sigmoid

  // Every field must be valid regardless of which kind consumes it.
  void validate() const {
    require_finite(beta, "beta");
    require_finite(epsilon, "epsilon");
    require_finite(alpha, "alpha");
    require_finite(margin, "m");
    require_finite(tau, "tau");
    require_finite(gamma, "gamma");
    require_finite(delta, "delta");
    if (!(beta > 0.0)) {
      throw std::invalid_argument("beta must be > 0, got " +
                                  format_double(beta));
    }
    if (!(epsilon >= 0.0 && epsilon < 0.5)) {
      throw std::invalid_argument("epsilon must be in [0, 0.5), got " +
                                  format_double(epsilon));
    }
    if (!(alpha > 0.0)) {
      throw std::invalid_argument("alpha must be > 0, got " +
                                  format_double(alpha));
    }
    if (!(margin > 0.0)) {
      throw std::invalid_argument("m must be > 0, got " +
                                  format_double(margin));
    }
    if (!(tau > 0.0)) {
      throw std::invalid_argument("tau must be > 0, got " +
                                  format_double(tau));
    }
    if (!(gamma >= 0.0)) {
      throw std::invalid_argument("gamma must be >= 0, got " +
                                  format_double(gamma));
    }
    if (!(delta >= 0.0)) {
      throw std::invalid_argument("delta must be >= 0, got " +
                                  format_double(delta));
    }
  }
};

namespace detail {

inline void check_pair(const PairLogRatios& pair, const ObjectiveConfig& cfg) {
  require_finite(pair.rho_w, "rho_w");
  require_finite(pair.rho_l, "rho_l");
  cfg.validate();
}

// One truncated, optionally focal-weighted term of margin_sigmoid:
//   T(l) = w(l) * max(0, l - delta),   w(l) = (1 - e^-l)^gamma.
// Returns the term value and dT/dl. The derivative of the focal part is
// evaluated as gamma * w * e^-l * ((l - delta) / (1 - e^-l)); the ratio stays
// bounded as l -> 0+, so the term is finite even for subnormal l.
struct TruncatedTerm {
  double value = 0.0;
  double d_dl = 0.0;
};

inline TruncatedTerm truncated_focal_term(double l, double delta,
                                          double gamma) {
  const double excess = l - delta;
  if (!(excess > 0.0)) {
    return {0.0, 0.0};
  }
  if (gamma == 0.0) {
    return {excess, 1.0};
  }
  const double em = std::exp(-l);
  const double base = -std::expm1(-l);  // 1 - e^-l, accurate near 0
  const double w = std::pow(base, gamma);
  const double d_focal = gamma * w * em * (excess / base);
  return {w * excess, w + d_focal};
}

}  // namespace detail

// L = softplus(-beta * dr)
inline LossGrad dpo_loss(const PairLogRatios& pair, const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double z = cfg.beta * pair.delta_r();
  const double s_neg = sigmoid(-z);
  LossGrad out;
  out.loss = softplus(-z);
  out.d_rho_w = -cfg.beta * s_neg;
  out.d_rho_l = -out.d_rho_w;
  return out;
}

// L = (1-eps) * softplus(-beta*dr) + eps * softplus(beta*dr).
// The arithmetic is kept term-by-term identical to dpo_loss and
// margin_sigmoid_loss so the eps=0 / delta=0 reductions are bit-exact.
inline LossGrad cdpo_loss(const PairLogRatios& pair,
                          const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double z = cfg.beta * pair.delta_r();
  const double eps = cfg.epsilon;
  const double s_neg = sigmoid(-z);
  const double s_pos = sigmoid(z);
  LossGrad out;
  out.loss = (1.0 - eps) * softplus(-z) + eps * softplus(z);
  out.d_rho_w =
      (1.0 - eps) * (-cfg.beta * s_neg) + eps * (cfg.beta * s_pos);
  out.d_rho_l = -out.d_rho_w;
  return out;
}

// L = max(0, alpha - beta*dr)
inline LossGrad dpo_hinge_loss(const PairLogRatios& pair,
                               const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double z = cfg.alpha - cfg.beta * pair.delta_r();
  LossGrad out;
  out.loss = relu(z);
  out.d_rho_w = z > 0.0 ? -cfg.beta : 0.0;
  out.d_rho_l = -out.d_rho_w;
  return out;
}

// L = -sigmoid(beta*rho_w) + sigmoid(beta*rho_l); each side is anchored to
// its own absolute log-ratio, so the loss is not shift invariant.
inline LossGrad apo_zero_loss(const PairLogRatios& pair,
                              const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double zw = cfg.beta * pair.rho_w;
  const double zl = cfg.beta * pair.rho_l;
  LossGrad out;
  out.loss = -sigmoid(zw) + sigmoid(zl);
  out.d_rho_w = -cfg.beta * sigmoid_deriv(zw);
  out.d_rho_l = cfg.beta * sigmoid_deriv(zl);
  return out;
}

// L = sigmoid(beta*rho_w) - sigmoid(beta*(rho_w - rho_l))
inline LossGrad apo_down_loss(const PairLogRatios& pair,
                              const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double zw = cfg.beta * pair.rho_w;
  const double zd = cfg.beta * pair.delta_r();
  LossGrad out;
  out.loss = sigmoid(zw) - sigmoid(zd);
  out.d_rho_w = cfg.beta * (sigmoid_deriv(zw) - sigmoid_deriv(zd));
  out.d_rho_l = cfg.beta * sigmoid_deriv(zd);
  return out;
}

// L = max(0, m - beta*rho_w) + max(0, m + beta*rho_l).
// A side emits exactly zero gradient once it clears its margin
// (beta*rho_w >= m, resp. beta*rho_l <= -m).
inline LossGrad apo_hinge_zero_loss(const PairLogRatios& pair,
                                    const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double zw = cfg.margin - cfg.beta * pair.rho_w;
  const double zl = cfg.margin + cfg.beta * pair.rho_l;
  LossGrad out;
  out.loss = relu(zw) + relu(zl);
  out.d_rho_w = zw > 0.0 ? -cfg.beta : 0.0;
  out.d_rho_l = zl > 0.0 ? cfg.beta : 0.0;
  return out;
}

// Smooth variant: L = tau*softplus((m - beta*rho_w)/tau)
//                   + tau*softplus((m + beta*rho_l)/tau).
// tau = 1 is the published objective; tau -> 0 recovers the hard hinge.
// Gradients decay exponentially past the margin but never switch off.
inline LossGrad apo_hinge_softplus_loss(const PairLogRatios& pair,
                                        const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double zw = (cfg.margin - cfg.beta * pair.rho_w) / cfg.tau;
  const double zl = (cfg.margin + cfg.beta * pair.rho_l) / cfg.tau;
  LossGrad out;
  out.loss = cfg.tau * softplus(zw) + cfg.tau * softplus(zl);
  out.d_rho_w = -cfg.beta * sigmoid(zw);
  out.d_rho_l = cfg.beta * sigmoid(zl);
  return out;
}

// Truncated log-sigmoid loss with optional focal weight:
//   l_plus  = softplus(-beta*dr),  l_minus = softplus(beta*dr)
//   L = (1-eps) * w(l_plus) * max(0, l_plus - delta)
//     +     eps * w(l_minus) * max(0, l_minus - delta)
// A term stops contributing loss and gradient once its l falls below delta.
inline LossGrad margin_sigmoid_loss(const PairLogRatios& pair,
                                    const ObjectiveConfig& cfg) {
  detail::check_pair(pair, cfg);
  const double z = cfg.beta * pair.delta_r();
  const double eps = cfg.epsilon;
  const double l_plus = softplus(-z);
  const double l_minus = softplus(z);
  const auto plus = detail::truncated_focal_term(l_plus, cfg.delta, cfg.gamma);
  const auto minus =
      detail::truncated_focal_term(l_minus, cfg.delta, cfg.gamma);
  const double dl_plus = -cfg.beta * sigmoid(-z);   // d l_plus / d dr
  const double dl_minus = cfg.beta * sigmoid(z);    // d l_minus / d dr
  LossGrad out;
  out.loss = (1.0 - eps) * plus.value + eps * minus.value;
  out.d_rho_w =
      (1.0 - eps) * (plus.d_dl * dl_plus) + eps * (minus.d_dl * dl_minus);
  out.d_rho_l = -out.d_rho_w;
  return out;
}

inline LossGrad evaluate_objective(const PairLogRatios& pair,
                                   const ObjectiveConfig& cfg) {
  switch (cfg.kind) {
    case ObjectiveKind::dpo: return dpo_loss(pair, cfg);
    case ObjectiveKind::cdpo: return cdpo_loss(pair, cfg);
    case ObjectiveKind::dpo_hinge: return dpo_hinge_loss(pair, cfg);
    case ObjectiveKind::apo_zero: return apo_zero_loss(pair, cfg);
    case ObjectiveKind::apo_down: return apo_down_loss(pair, cfg);
    case ObjectiveKind::apo_hinge_zero: return apo_hinge_zero_loss(pair, cfg);
    case ObjectiveKind::apo_hinge_softplus:
      return apo_hinge_softplus_loss(pair, cfg);
    case ObjectiveKind::margin_sigmoid: return margin_sigmoid_loss(pair, cfg);
  }
  throw std::invalid_argument("unknown objective kind");
}

}  // namespace prefopt
