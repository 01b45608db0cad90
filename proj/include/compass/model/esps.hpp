#pragma once

#include <memory>

#include "compass/model/mspn.hpp"

namespace compass {

// Stage-2 enzyme/substrate pairing head over a frozen stage-1 profiler.
// The substrate representation is the stage-1 final hidden state at the
// window center (or the mean over real positions); the enzyme
// representation is the mean-pooled encoder output of its sequence.
class EspsModel {
 public:
  ModelConfig cfg;
  std::shared_ptr<MspnModel> stage1;  // frozen
  std::shared_ptr<ToyEncoderProvider> enzyme_provider;  // frozen
  Linear sub_proj;   // d_model -> stage2_dim
  Linear enz_proj;   // enzyme dim -> stage2_dim
  DualGatedFusion fusion;
  Linear fusion_concat;  // "concat" ablation variant: 2*dim -> dim
  Mlp2 head;         // stage2_dim -> hidden -> 1

  static EspsModel init(std::shared_ptr<MspnModel> stage1, std::uint64_t seed) {
    EspsModel m;
    m.cfg = stage1->cfg;
    m.stage1 = std::move(stage1);
    m.stage1->freeze_all();
    Rng root(seed, rng_stream::kInit);
    Rng enz_rng = root.fork(101);
    Rng proj_rng = root.fork(102);
    Rng fusion_rng = root.fork(103);
    Rng head_rng = root.fork(104);
    LoraConfig no_lora;
    no_lora.enabled = false;
    m.enzyme_provider = std::make_shared<ToyEncoderProvider>(m.cfg.d_model, 1, m.cfg.heads, m.cfg.ffn_mult, no_lora,
                                                             enz_rng);
    m.enzyme_provider->set_adapters_enabled(false);
    for (auto& layer : m.enzyme_provider->layers()) {
      layer.q.set_trainable_adapters(false);
      layer.k.set_trainable_adapters(false);
      layer.v.set_trainable_adapters(false);
    }
    m.sub_proj = Linear::init(m.cfg.stage2_dim, m.cfg.d_model, proj_rng);
    m.enz_proj = Linear::init(m.cfg.stage2_dim, m.cfg.d_model, proj_rng);
    m.fusion = DualGatedFusion::init(m.cfg.stage2_dim, m.cfg.stage2_hidden, fusion_rng);
    m.fusion_concat = Linear::init(m.cfg.stage2_dim, 2 * m.cfg.stage2_dim, fusion_rng);
    m.head = Mlp2::init(1, m.cfg.stage2_hidden, m.cfg.stage2_dim, head_rng);
    return m;
  }

  // Frozen substrate representation for one window (eval mode, no tape).
  Tensor substrate_embedding(const std::string& peptide) const {
    if (peptide.size() != cfg.pair_window)
      throw DataError("esps: substrate must be " + std::to_string(cfg.pair_window) + " letters, got " +
                      std::to_string(peptide.size()));
    ForwardRngs rngs = ForwardRngs::at(0, 0);
    MspnTrace trace = stage1->forward(peptide, Mode::eval, rngs);
    if (cfg.stage2_source == "mean") {
      Tensor real = gather_real_rows(trace.final_hidden, trace.mask);
      return mean_axis0(real);
    }
    return select_row(trace.final_hidden, (cfg.pair_window - 1) / 2);
  }

  // Frozen global enzyme representation: mean-pooled over the (truncated)
  // sequence.
  Tensor enzyme_embedding(const std::string& enzyme_seq) const {
    if (enzyme_seq.empty()) throw DataError("esps: empty enzyme sequence");
    std::string seq = enzyme_seq.size() > cfg.enzyme_truncate ? enzyme_seq.substr(0, cfg.enzyme_truncate) : enzyme_seq;
    Rng unused(0, 0);
    return mean_axis0(enzyme_provider->embed(seq, Mode::eval, unused));
  }

  // Pairing probability from cached embeddings (the trainable path).
  Tensor score_from_embeddings(const Tensor& h_sub, const Tensor& h_enz) const {
    Tensor s = sub_proj.forward(h_sub);
    Tensor e = enz_proj.forward(h_enz);
    Tensor fused;
    if (cfg.stage2_fusion == "dual_gated") {
      fused = fusion.forward(s, e);
    } else if (cfg.stage2_fusion == "concat") {
      fused = fusion_concat.forward(concat_cols(s, e));
    } else if (cfg.stage2_fusion == "sum") {
      fused = add(s, e);
    } else {
      throw DataError("unknown stage2 fusion variant '" + cfg.stage2_fusion + "'");
    }
    return sigmoid(head.forward(fused));
  }

  // End-to-end pairing probability in (0, 1).
  double forward(const std::string& substrate_peptide, const std::string& enzyme_seq) const {
    Tensor p = score_from_embeddings(substrate_embedding(substrate_peptide), enzyme_embedding(enzyme_seq));
    return p.value();
  }

  // Stage-2 parameters only (the trainable surface).
  ParamRegistry stage2_params() const {
    ParamRegistry reg;
    enzyme_provider->register_params(reg, "esps.enzyme");
    sub_proj.register_params(reg, "esps.sub_proj");
    enz_proj.register_params(reg, "esps.enz_proj");
    fusion.register_params(reg, "esps.fusion");
    fusion_concat.register_params(reg, "esps.fusion_concat");
    head.register_params(reg, "esps.head");
    return reg;
  }

  // Full registry (frozen stage-1 included) for self-contained checkpoints.
  ParamRegistry params() const {
    ParamRegistry reg = stage1->params();
    ParamRegistry s2 = stage2_params();
    for (const auto& [n, t] : s2.items()) reg.add(n, t);
    return reg;
  }
};

inline double esps_forward(const EspsModel& model, const std::string& substrate_peptide, std::size_t center_index,
                           const std::string& enzyme_seq) {
  if (substrate_peptide.size() != model.cfg.pair_window) throw DataError("esps_forward: malformed substrate");
  if (center_index != (model.cfg.pair_window - 1) / 2)
    throw DataError("esps_forward: center index must be the window midpoint");
  return model.forward(substrate_peptide, enzyme_seq);
}

}  // namespace compass
