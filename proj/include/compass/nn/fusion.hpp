#pragma once

#include "compass/nn/linear.hpp"

namespace compass {

// Primary/auxiliary fusion: the protein track is gated by a signal derived
// from both tracks, and a parallel residual track adds cross-modal context.
//   gate     = sigmoid(MLP_g([Xp ; Xa])) applied elementwise to Xp
//   residual = MLP_r([Xp ; Xa])
//   out      = alpha * gate_track + beta * residual
struct BioCoupledFusion {
  Mlp2 gate;      // (dp+da) -> hidden -> dp
  Mlp2 residual;  // (dp+da) -> hidden -> dp
  Tensor alpha;   // scalar
  Tensor beta;    // scalar

  static BioCoupledFusion init(std::size_t d_primary, std::size_t d_aux, std::size_t d_hidden, Rng& rng,
                               double alpha_init = 1.0, double beta_init = 0.5) {
    BioCoupledFusion f;
    f.gate = Mlp2::init(d_primary, d_hidden, d_primary + d_aux, rng);
    f.residual = Mlp2::init(d_primary, d_hidden, d_primary + d_aux, rng);
    f.alpha = Tensor::scalar(alpha_init, true);
    f.beta = Tensor::scalar(beta_init, true);
    return f;
  }

  Tensor forward(const Tensor& primary, const Tensor& aux) const {
    if (primary.rows() != aux.rows())
      throw std::invalid_argument("bio_coupled_fusion: row count mismatch " + shape_str(primary.shape()) + " vs " +
                                  shape_str(aux.shape()));
    Tensor combined = concat_cols(primary, aux);
    Tensor gated = mul(sigmoid(gate.forward(combined)), primary);
    Tensor res = residual.forward(combined);
    return add(scale(gated, alpha), scale(res, beta));
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    gate.register_params(reg, prefix + ".gate");
    residual.register_params(reg, prefix + ".residual");
    reg.add(prefix + ".alpha", alpha);
    reg.add(prefix + ".beta", beta);
  }
};

inline Tensor bio_coupled_fusion(const Tensor& primary, const Tensor& aux, const BioCoupledFusion& params) {
  return params.forward(primary, aux);
}

// Symmetric two-gate fusion for a substrate/enzyme vector pair:
//   g_s = sigmoid(MLP_s([Hs ; He]))   g_e = sigmoid(MLP_e([Hs ; He]))
//   out = a0 (g_s . Hs) + a1 (g_e . He) + a2 MLP_r([Hs ; He])
struct DualGatedFusion {
  Mlp2 gate_sub;
  Mlp2 gate_enz;
  Mlp2 residual;
  Tensor alpha0, alpha1, alpha2;  // scalars

  static DualGatedFusion init(std::size_t dim, std::size_t d_hidden, Rng& rng) {
    DualGatedFusion f;
    f.gate_sub = Mlp2::init(dim, d_hidden, 2 * dim, rng);
    f.gate_enz = Mlp2::init(dim, d_hidden, 2 * dim, rng);
    f.residual = Mlp2::init(dim, d_hidden, 2 * dim, rng);
    f.alpha0 = Tensor::scalar(1.0, true);
    f.alpha1 = Tensor::scalar(1.0, true);
    f.alpha2 = Tensor::scalar(1.0, true);
    return f;
  }

  Tensor forward(const Tensor& substrate, const Tensor& enzyme) const {
    if (substrate.shape() != enzyme.shape())
      throw std::invalid_argument("dual_gated_fusion: dimension mismatch " + shape_str(substrate.shape()) + " vs " +
                                  shape_str(enzyme.shape()));
    Tensor combined = concat_cols(substrate, enzyme);
    Tensor kept_sub = mul(sigmoid(gate_sub.forward(combined)), substrate);
    Tensor kept_enz = mul(sigmoid(gate_enz.forward(combined)), enzyme);
    Tensor res = residual.forward(combined);
    return add(add(scale(kept_sub, alpha0), scale(kept_enz, alpha1)), scale(res, alpha2));
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    gate_sub.register_params(reg, prefix + ".gate_sub");
    gate_enz.register_params(reg, prefix + ".gate_enz");
    residual.register_params(reg, prefix + ".residual");
    reg.add(prefix + ".alpha0", alpha0);
    reg.add(prefix + ".alpha1", alpha1);
    reg.add(prefix + ".alpha2", alpha2);
  }
};

inline Tensor dual_gated_fusion(const Tensor& substrate, const Tensor& enzyme, const DualGatedFusion& params) {
  return params.forward(substrate, enzyme);
}

}  // namespace compass
