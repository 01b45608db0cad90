#pragma once

#include <memory>
#include <optional>

#include "compass/crosstalk/crosstalk.hpp"
#include "compass/data/segmentation.hpp"
#include "compass/loss/losses.hpp"
#include "compass/model/provider.hpp"
#include "compass/nn/fusion.hpp"
#include "compass/nn/head.hpp"

namespace compass {

// Dropout streams for one forward pass. Fork fresh ones per (epoch, step,
// sample) so replays are bitwise reproducible.
struct ForwardRngs {
  Rng lora;
  Rng prompt;

  static ForwardRngs at(std::uint64_t seed, std::uint64_t tag) {
    return {Rng(seed, rng_stream::kLoraDropout).fork(tag), Rng(seed, rng_stream::kPromptDropout).fork(tag)};
  }
};

struct MspnTrace {
  Tensor protein_track;  // L x dp (input embedding, protein side)
  Tensor chem_track;     // L x da
  Tensor final_hidden;   // L x d, last block output before the head
  Tensor logits;         // L x C
  Tensor probs;          // sigmoid(logits)
  PadMask mask;
};

// Stage-1 multi-label site profiler: dual-track embedding, gated fusion,
// prompt-biased transformer blocks, residual MLP head.
class MspnModel {
 public:
  ModelConfig cfg;
  std::uint64_t init_seed = 0;

  std::shared_ptr<ToyEncoderProvider> protein_provider;
  std::shared_ptr<EmbeddingProvider> chemical_provider;
  BioCoupledFusion fusion;
  Linear fusion_concat;  // used by the "concat" variant
  Linear fusion_sum;     // used by the "sum" variant
  std::vector<PromptLayer> blocks;
  PromptParams prompt_params;
  Tensor crosstalk_prior;  // C x C constant buffer
  ResidualMlpHead head;
  LossParams loss_params;
  bool prompt_enabled = true;
  bool lora_enabled = true;
  LossVariant loss_variant = LossVariant::hybrid;

  static MspnModel init(const ModelConfig& cfg, std::uint64_t seed) {
    MspnModel m;
    m.cfg = cfg;
    m.init_seed = seed;
    Rng root(seed, rng_stream::kInit);
    Rng enc_rng = root.fork(1);
    Rng chem_rng = root.fork(2);
    Rng fusion_rng = root.fork(3);
    Rng block_rng = root.fork(4);
    Rng head_rng = root.fork(5);
    Rng prompt_rng = root.fork(6);

    m.protein_provider = std::make_shared<ToyEncoderProvider>(cfg.d_model, cfg.encoder_layers, cfg.heads,
                                                              cfg.ffn_mult, cfg.lora, enc_rng);
    m.chemical_provider = std::make_shared<PhyschemProvider>(cfg.d_chem_embed, chem_rng);
    const std::size_t da = m.chemical_provider->dim();
    m.fusion = BioCoupledFusion::init(cfg.d_model, da, cfg.fusion_hidden, fusion_rng);
    m.fusion_concat = Linear::init(cfg.d_model, cfg.d_model + da, fusion_rng);
    m.fusion_sum = Linear::init(cfg.d_model, da, fusion_rng);
    for (std::size_t l = 0; l < cfg.prompt_layers; ++l)
      m.blocks.push_back(PromptLayer::init(cfg.d_model, cfg.num_types, cfg.heads, cfg.ffn_mult * cfg.d_model, block_rng));
    m.prompt_params = PromptParams::init(cfg.num_types, prompt_rng, cfg.prompt.alpha_init);
    m.prompt_params.dropout_rate = cfg.prompt.dropout;
    m.crosstalk_prior = Tensor::zeros({cfg.num_types, cfg.num_types});
    m.head = ResidualMlpHead::init(cfg.num_types, cfg.head_hidden, cfg.d_model, head_rng);
    m.loss_params = LossParams::init(cfg.eta_raw_init, cfg.omega_raw_init);
    m.prompt_enabled = cfg.prompt.enabled;
    m.lora_enabled = cfg.lora.enabled;
    m.loss_variant = loss_variant_from_string(cfg.loss_variant);
    m.protein_provider->set_adapters_enabled(m.lora_enabled);
    return m;
  }

  void set_crosstalk_prior(const CrosstalkMatrix& prior) {
    if (prior.num_types != cfg.num_types) throw DataError("crosstalk prior has wrong class count");
    crosstalk_prior = crosstalk_prior_tensor(prior);
  }

  // Learned relationship matrix; recomputed from the prior each call.
  Tensor relation() const { return project_prior(crosstalk_prior, prompt_params); }

  // `trace_input_grads` marks the two input tracks as gradient roots so an
  // attribution pass can read d(logit)/d(embedding) even on a frozen model.
  MspnTrace forward(const std::string& seq, Mode mode, ForwardRngs& rngs, bool trace_input_grads = false) const {
    if (seq.empty()) throw DataError("mspn_forward: empty sequence");
    if (seq.size() > cfg.max_peptide_len && seq.size() != cfg.pair_window)
      throw DataError("mspn_forward: sequence longer than the configured window (" + std::to_string(seq.size()) +
                      " > " + std::to_string(cfg.max_peptide_len) + ")");
    MspnTrace trace;
    trace.mask = detail::pad_mask_of(seq);
    trace.protein_track = protein_provider->embed(seq, mode, rngs.lora);
    trace.chem_track = chemical_provider->embed(seq, mode, rngs.lora);
    if (trace_input_grads) {
      trace.protein_track.set_requires_grad(true);
      trace.chem_track.set_requires_grad(true);
    }

    Tensor h;
    if (cfg.fusion_variant == "gated") {
      h = fusion.forward(trace.protein_track, trace.chem_track);
    } else if (cfg.fusion_variant == "concat") {
      h = fusion_concat.forward(concat_cols(trace.protein_track, trace.chem_track));
    } else if (cfg.fusion_variant == "sum") {
      h = add(trace.protein_track, fusion_sum.forward(trace.chem_track));
    } else {
      throw DataError("unknown fusion variant '" + cfg.fusion_variant + "'");
    }

    std::optional<Tensor> shared_bias;
    Tensor rel;
    if (prompt_enabled) rel = relation();
    for (const auto& block : blocks) {
      std::optional<Tensor> bias;
      if (prompt_enabled) {
        if (cfg.prompt.share_bias_across_layers && shared_bias) {
          bias = shared_bias;
        } else {
          Tensor prelim = softmax_lastdim(cfg.prompt.predictor_shares_head ? head.forward(h)
                                                                           : block.predictor.forward(h));
          bias = prompt_bias(prelim, rel, prompt_params, mode, rngs.prompt);
          if (cfg.prompt.share_bias_across_layers) shared_bias = bias;
        }
      }
      h = block_forward(block, h, bias, mode, trace.mask);
    }
    trace.final_hidden = h;
    trace.logits = head.forward(h);
    trace.probs = sigmoid(trace.logits);
    return trace;
  }

  ParamRegistry params() const {
    ParamRegistry reg;
    protein_provider->register_params(reg, "mspn.protein");
    chemical_provider->register_params(reg, "mspn.chem");
    fusion.register_params(reg, "mspn.fusion");
    fusion_concat.register_params(reg, "mspn.fusion_concat");
    fusion_sum.register_params(reg, "mspn.fusion_sum");
    for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].register_params(reg, "mspn.block" + std::to_string(l));
    reg.add("mspn.prompt.proj_a", prompt_params.proj_a);
    reg.add("mspn.prompt.proj_b", prompt_params.proj_b);
    reg.add("mspn.prompt.alpha", prompt_params.alpha);
    reg.add("mspn.crosstalk_prior", crosstalk_prior);
    head.register_params(reg, "mspn.head");
    reg.add("mspn.loss.eta_raw", loss_params.eta_raw);
    reg.add("mspn.loss.omega_raw", loss_params.omega_raw);
    return reg;
  }

  void freeze_all() { apply_requires_grad(false); }

 private:
  // Pre-norm block body shared by the per-layer and shared-bias paths.
  static Tensor block_forward(const PromptLayer& block, const Tensor& x, const std::optional<Tensor>& bias, Mode mode,
                              const PadMask& mask) {
    Tensor normed = layer_norm(x, block.ln1_g, block.ln1_b);
    Tensor attn = multi_head_attention(block.q.forward(normed), block.k.forward(normed), block.v.forward(normed),
                                       block.heads, bias, mask);
    Tensor a = add(x, block.out_proj.forward(attn));
    Tensor f = block.ffn2.forward(relu(block.ffn1.forward(layer_norm(a, block.ln2_g, block.ln2_b))));
    Tensor out = add(a, f);
    if (mask.any()) out = mul(out, mask.row_gate(out.cols()));
    return out;
  }

  void apply_requires_grad(bool v) {
    auto set_linear = [&](Linear& l) {
      l.weight.set_requires_grad(v);
      l.bias.set_requires_grad(v);
    };
    auto set_mlp = [&](Mlp2& m) {
      set_linear(m.first);
      set_linear(m.second);
    };
    for (auto& layer : protein_provider->layers()) {
      layer.q.set_trainable_adapters(v);
      layer.k.set_trainable_adapters(v);
      layer.v.set_trainable_adapters(v);
    }
    // chemical provider's learned table
    ParamRegistry chem;
    chemical_provider->register_params(chem, "c");
    for (auto& [n, t] : chem.items()) t.set_requires_grad(v);
    set_mlp(fusion.gate);
    set_mlp(fusion.residual);
    fusion.alpha.set_requires_grad(v);
    fusion.beta.set_requires_grad(v);
    set_linear(fusion_concat);
    set_linear(fusion_sum);
    for (auto& b : blocks) {
      set_linear(b.q);
      set_linear(b.k);
      set_linear(b.v);
      set_linear(b.out_proj);
      set_linear(b.ffn1);
      set_linear(b.ffn2);
      set_linear(b.predictor);
      b.ln1_g.set_requires_grad(v);
      b.ln1_b.set_requires_grad(v);
      b.ln2_g.set_requires_grad(v);
      b.ln2_b.set_requires_grad(v);
    }
    prompt_params.proj_a.set_requires_grad(v);
    prompt_params.proj_b.set_requires_grad(v);
    prompt_params.alpha.set_requires_grad(v);
    set_linear(head.hidden);
    set_linear(head.out);
    if (head.skip.defined()) head.skip.set_requires_grad(v);
    loss_params.eta_raw.set_requires_grad(v);
    loss_params.omega_raw.set_requires_grad(v);
  }
};

// Rows of the label matrix and logits restricted to non-pad positions.
inline Tensor gather_real_rows(const Tensor& t, const PadMask& mask) {
  if (!mask.any()) return t;
  std::vector<Tensor> runs;
  std::size_t i = 0;
  while (i < mask.masked.size()) {
    if (mask.masked[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < mask.masked.size() && !mask.masked[j]) ++j;
    runs.push_back(slice_rows(t, i, j));
    i = j;
  }
  if (runs.empty()) throw DataError("gather_real_rows: every position is padding");
  if (runs.size() == 1) return runs[0];
  return concat_rows(std::span<const Tensor>(runs.data(), runs.size()));
}

inline Tensor labels_tensor(const PeptideSample& sample) {
  const std::size_t L = sample.labels.size();
  const std::size_t C = L > 0 ? sample.labels[0].size() : 0;
  Tensor t = Tensor::zeros({L, C});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < C; ++c) t.at(i, c) = sample.labels[i][c];
  return t;
}

}  // namespace compass
