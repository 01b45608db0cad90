#pragma once

#include <string>

#include "compass/core/ops.hpp"

namespace compass {

// Learnable mixing parameters of the training objective. The raw scalars
// are unconstrained; eta = sigmoid(eta_raw) stays in (0,1) and
// omega = softplus(omega_raw) stays non-negative for any raw value.
struct LossParams {
  Tensor eta_raw;    // scalar
  Tensor omega_raw;  // scalar
  double gamma = 2.0;
  double dice_eps = 1.0;

  static LossParams init(double eta_raw_init = 0.0, double omega_raw_init = -2.0) {
    LossParams p;
    p.eta_raw = Tensor::scalar(eta_raw_init, true);
    p.omega_raw = Tensor::scalar(omega_raw_init, true);
    return p;
  }

  Tensor eta() const { return sigmoid(eta_raw); }
  Tensor omega() const { return softplus(omega_raw); }
};

namespace detail {
inline void check_probs_labels(const Tensor& probs, const Tensor& labels, const char* op, bool strict_range) {
  if (probs.shape() != labels.shape())
    throw std::invalid_argument(std::string(op) + ": probs " + shape_str(probs.shape()) + " vs labels " +
                                shape_str(labels.shape()));
  if (strict_range)
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (probs.data()[i] < 0.0 || probs.data()[i] > 1.0)
        throw std::invalid_argument(std::string(op) + ": probability outside [0,1]");
}
}  // namespace detail

// Macro-averaged soft Dice loss over classes (columns):
//   1 - (1/C) sum_c (2 sum_i y p + eps) / (sum_i y + sum_i p + eps)
// The eps convention makes an empty class contribute a perfect score.
inline Tensor dice_loss(const Tensor& probs, const Tensor& labels, double eps = 1.0) {
  detail::check_probs_labels(probs, labels, "dice_loss", /*strict_range=*/true);
  Tensor overlap = sum_axis0(mul(labels, probs));                              // 1 x C
  Tensor numer = add_scalar(mul_scalar(overlap, 2.0), eps);                    // 2*overlap + eps
  Tensor denom = add_scalar(add(sum_axis0(labels), sum_axis0(probs)), eps);    // y_sum + p_sum + eps
  Tensor coeff = div(numer, denom);
  return add_scalar(neg(mean(coeff)), 1.0);
}

// Focal loss with focusing exponent gamma, mean over rows (sites):
//   -(1/N) sum_i sum_c [ y (1-p)^g log p + (1-y) p^g log(1-p) ]
// Probabilities are clamped to [1e-12, 1-1e-12] so saturated predictions
// keep the loss finite. gamma = 0 reduces to binary cross-entropy.
inline Tensor focal_loss(const Tensor& probs, const Tensor& labels, double gamma = 2.0) {
  detail::check_probs_labels(probs, labels, "focal_loss", /*strict_range=*/true);
  const double n = probs.rank() == 2 ? static_cast<double>(probs.rows()) : 1.0;
  Tensor p = clamp(probs, 1e-12, 1.0 - 1e-12);
  Tensor q = add_scalar(neg(p), 1.0);          // 1 - p
  Tensor y = labels;
  Tensor yq = add_scalar(neg(y), 1.0);         // 1 - y
  Tensor pos = mul(y, mul(pow_const(q, gamma), compass::log(p)));
  Tensor negterm = mul(yq, mul(pow_const(p, gamma), compass::log(q)));
  return mul_scalar(sum(add(pos, negterm)), -1.0 / n);
}

inline Tensor bce_loss(const Tensor& probs, const Tensor& labels) { return focal_loss(probs, labels, 0.0); }

// Mean predicted probability over every (site, class) entry; a calibration
// regularizer that leans against blanket over-confidence.
inline Tensor magnification_loss(const Tensor& logits) { return mean(sigmoid(logits)); }

// eta * (dice + omega * magnification) + (1 - eta) * focal, on raw logits.
inline Tensor hybrid_loss(const Tensor& logits, const Tensor& labels, const LossParams& params) {
  detail::check_probs_labels(logits, labels, "hybrid_loss", /*strict_range=*/false);
  Tensor probs = sigmoid(logits);
  Tensor dice = dice_loss(probs, labels, params.dice_eps);
  Tensor focal = focal_loss(probs, labels, params.gamma);
  Tensor mag = magnification_loss(logits);
  Tensor eta = params.eta();
  Tensor macro = add(dice, mul(params.omega(), mag));
  Tensor one_minus_eta = add_scalar(neg(eta), 1.0);
  return add(mul(eta, macro), mul(one_minus_eta, focal));
}

enum class LossVariant { hybrid, dice_only, focal_only, bce };

inline LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "hybrid") return LossVariant::hybrid;
  if (s == "dice") return LossVariant::dice_only;
  if (s == "focal") return LossVariant::focal_only;
  if (s == "bce") return LossVariant::bce;
  throw std::invalid_argument("unknown loss variant '" + s + "'");
}

inline std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::hybrid: return "hybrid";
    case LossVariant::dice_only: return "dice";
    case LossVariant::focal_only: return "focal";
    case LossVariant::bce: return "bce";
  }
  return "?";
}

// Training objective dispatch; the non-hybrid variants exist as ablation
// baselines.
inline Tensor stage1_loss(const Tensor& logits, const Tensor& labels, const LossParams& params, LossVariant variant) {
  switch (variant) {
    case LossVariant::hybrid: return hybrid_loss(logits, labels, params);
    case LossVariant::dice_only: return dice_loss(sigmoid(logits), labels, params.dice_eps);
    case LossVariant::focal_only: return focal_loss(sigmoid(logits), labels, params.gamma);
    case LossVariant::bce: return bce_loss(sigmoid(logits), labels);
  }
  throw std::logic_error("stage1_loss: unreachable");
}

}  // namespace compass
