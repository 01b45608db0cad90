#pragma once

#include <cmath>

#include "compass/core/gradcheck.hpp"
#include "compass/core/ops.hpp"
#include "compass/crosstalk/crosstalk.hpp"

namespace compass {

// Learnable pieces of the pairwise attention prompt: two parallel C x C
// projections of the prior, a scalar gain, and the regularizing dropout.
struct PromptParams {
  Tensor proj_a;  // C x C
  Tensor proj_b;  // C x C
  Tensor alpha;   // scalar
  double dropout_rate = 0.1;

  static PromptParams init(std::size_t num_types, Rng& rng, double alpha_init = 0.1) {
    PromptParams p;
    const double sd = 1.0 / std::sqrt(static_cast<double>(num_types));
    p.proj_a = Tensor::randn({num_types, num_types}, rng, sd, true);
    p.proj_b = Tensor::randn({num_types, num_types}, rng, sd, true);
    p.alpha = Tensor::scalar(alpha_init, true);
    return p;
  }
};

inline Tensor crosstalk_prior_tensor(const CrosstalkMatrix& m) {
  return Tensor::from({m.num_types, m.num_types}, m.values);
}

// Learned relationship matrix R = (P A)(P B)^T from the static prior P.
inline Tensor project_prior(const Tensor& prior, const PromptParams& params) {
  if (prior.rank() != 2 || prior.rows() != prior.cols())
    throw std::invalid_argument("project_prior: prior must be square");
  if (params.proj_a.shape() != prior.shape() || params.proj_b.shape() != prior.shape())
    throw std::invalid_argument("project_prior: projection shapes must match the prior");
  Tensor left = matmul(prior, params.proj_a);
  Tensor right = matmul(prior, params.proj_b);
  return matmul(left, transpose(right));
}

// Pairwise attention prompt B_ij = dropout(tanh(p_i^T R p_j)) * alpha for
// per-residue class distributions p (rows sum to 1).
inline Tensor prompt_bias(const Tensor& probs, const Tensor& relation, const PromptParams& params, Mode mode,
                          Rng& dropout_rng) {
  if (probs.rank() != 2 || relation.rank() != 2)
    throw std::invalid_argument("prompt_bias: expects rank-2 inputs");
  if (probs.cols() != relation.rows() || relation.rows() != relation.cols())
    throw std::invalid_argument("prompt_bias: class dimensions disagree");
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) s += probs.at(i, c);
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("prompt_bias: row " + std::to_string(i) + " is not a probability vector");
  }
  Tensor inter = matmul(matmul(probs, relation), transpose(probs));  // L x L
  Tensor gated = dropout(tanh_act(inter), params.dropout_rate, mode, dropout_rng);
  return scale(gated, params.alpha);
}

// softmax((Q K^T) / sqrt(d_k) + B) V. With B identically zero this is
// plain scaled dot-product attention.
inline Tensor prompted_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw std::invalid_argument("prompted_attention: rank-2 inputs");
  if (q.cols() != k.cols() || q.cols() == 0) throw std::invalid_argument("prompted_attention: key width mismatch");
  if (k.rows() != v.rows()) throw std::invalid_argument("prompted_attention: K/V row mismatch");
  if (bias.rank() != 2 || bias.rows() != q.rows() || bias.cols() != k.rows())
    throw std::invalid_argument("prompted_attention: bias must be L x L");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor logits = add(mul_scalar(matmul(q, transpose(k)), inv_sqrt_dk), bias);
  return matmul(softmax_lastdim(logits), v);
}

}  // namespace compass
