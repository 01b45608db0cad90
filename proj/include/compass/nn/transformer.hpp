#pragma once

#include <optional>
#include <vector>

#include "compass/crosstalk/prompt.hpp"
#include "compass/nn/linear.hpp"

namespace compass {

// Attention masking for pad ('X') positions: masked keys get a large
// negative logit; masked rows are zeroed after each block so pad positions
// stay exactly zero throughout the stack.
struct PadMask {
  std::vector<bool> masked;

  static PadMask none(std::size_t length) {
    PadMask m;
    m.masked.assign(length, false);
    return m;
  }

  static PadMask from(const std::vector<bool>& masked_positions) {
    PadMask m;
    m.masked = masked_positions;
    return m;
  }

  bool any() const {
    for (bool b : masked)
      if (b) return true;
    return false;
  }

  Tensor key_bias() const {
    const std::size_t l = masked.size();
    Tensor t = Tensor::zeros({l, l});
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j)
        if (masked[j]) t.at(i, j) = -1e9;
    return t;
  }

  Tensor row_gate(std::size_t width) const {
    Tensor t = Tensor::full({masked.size(), width}, 1.0);
    for (std::size_t i = 0; i < masked.size(); ++i)
      if (masked[i])
        for (std::size_t j = 0; j < width; ++j) t.at(i, j) = 0.0;
    return t;
  }
};

// Multi-head scaled dot-product attention over already-projected q/k/v,
// with an optional L x L additive bias applied to every head's logits.
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                   const std::optional<Tensor>& bias, const PadMask& mask) {
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::optional<Tensor> mask_bias;
  if (mask.any()) mask_bias = mask.key_bias();

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = mul_scalar(matmul(qh, transpose(kh)), inv_sqrt);
    if (bias) logits = add(logits, *bias);
    if (mask_bias) logits = add(logits, *mask_bias);
    head_outputs.push_back(matmul(softmax_lastdim(logits), vh));
  }
  return concat_cols(std::span<const Tensor>(head_outputs.data(), head_outputs.size()));
}

// Pre-norm transformer block used by the frozen sequence encoder; q/k/v
// carry low-rank adapters.
struct EncoderLayer {
  LoraLinear q, k, v;
  Linear out_proj;
  Linear ffn1, ffn2;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  std::size_t heads = 4;

  static EncoderLayer init(std::size_t d, std::size_t heads, std::size_t d_ffn, std::size_t lora_rank,
                           double lora_alpha, double lora_dropout, Rng& rng) {
    EncoderLayer l;
    l.q = LoraLinear::init(d, d, lora_rank, lora_alpha, lora_dropout, rng);
    l.k = LoraLinear::init(d, d, lora_rank, lora_alpha, lora_dropout, rng);
    l.v = LoraLinear::init(d, d, lora_rank, lora_alpha, lora_dropout, rng);
    l.out_proj = Linear::init(d, d, rng, /*trainable=*/false);
    l.ffn1 = Linear::init(d_ffn, d, rng, false);
    l.ffn2 = Linear::init(d, d_ffn, rng, false);
    l.ln1_g = Tensor::full({d}, 1.0, false);
    l.ln1_b = Tensor::zeros({d}, false);
    l.ln2_g = Tensor::full({d}, 1.0, false);
    l.ln2_b = Tensor::zeros({d}, false);
    l.heads = heads;
    return l;
  }

  Tensor forward(const Tensor& x, Mode mode, Rng& lora_rng, const PadMask& mask) const {
    Tensor normed = layer_norm(x, ln1_g, ln1_b);
    Tensor attn = multi_head_attention(q.forward(normed, mode, lora_rng), k.forward(normed, mode, lora_rng),
                                       v.forward(normed, mode, lora_rng), heads, std::nullopt, mask);
    Tensor a = add(x, out_proj.forward(attn));
    Tensor f = ffn2.forward(relu(ffn1.forward(layer_norm(a, ln2_g, ln2_b))));
    Tensor out = add(a, f);
    if (mask.any()) out = mul(out, mask.row_gate(out.cols()));
    return out;
  }

  void set_adapters_enabled(bool enabled) {
    q.adapter_enabled = enabled;
    k.adapter_enabled = enabled;
    v.adapter_enabled = enabled;
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    q.register_params(reg, prefix + ".q");
    k.register_params(reg, prefix + ".k");
    v.register_params(reg, prefix + ".v");
    out_proj.register_params(reg, prefix + ".o");
    ffn1.register_params(reg, prefix + ".ffn1");
    ffn2.register_params(reg, prefix + ".ffn2");
    reg.add(prefix + ".ln1_g", ln1_g);
    reg.add(prefix + ".ln1_b", ln1_b);
    reg.add(prefix + ".ln2_g", ln2_g);
    reg.add(prefix + ".ln2_b", ln2_b);
  }
};

// Pre-norm transformer block whose attention logits carry the pairwise
// class-crosstalk prompt. The preliminary class distribution is read off
// the block's own input through a dedicated predictor.
struct PromptLayer {
  Linear q, k, v, out_proj;
  Linear ffn1, ffn2;
  Linear predictor;  // d -> C
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  std::size_t heads = 4;

  static PromptLayer init(std::size_t d, std::size_t num_types, std::size_t heads, std::size_t d_ffn, Rng& rng) {
    PromptLayer l;
    l.q = Linear::init(d, d, rng);
    l.k = Linear::init(d, d, rng);
    l.v = Linear::init(d, d, rng);
    l.out_proj = Linear::init(d, d, rng);
    l.ffn1 = Linear::init(d_ffn, d, rng);
    l.ffn2 = Linear::init(d, d_ffn, rng);
    l.predictor = Linear::init(num_types, d, rng);
    l.ln1_g = Tensor::full({d}, 1.0, true);
    l.ln1_b = Tensor::zeros({d}, true);
    l.ln2_g = Tensor::full({d}, 1.0, true);
    l.ln2_b = Tensor::zeros({d}, true);
    l.heads = heads;
    return l;
  }

  // `relation` is the learned class-relationship matrix; pass prompt_enabled
  // = false (or alpha = 0) to run the block as a plain transformer layer.
  Tensor forward(const Tensor& x, const Tensor& relation, const PromptParams& prompt, bool prompt_enabled, Mode mode,
                 Rng& prompt_rng, const PadMask& mask) const {
    std::optional<Tensor> bias;
    if (prompt_enabled) {
      Tensor prelim = softmax_lastdim(predictor.forward(x));
      bias = prompt_bias(prelim, relation, prompt, mode, prompt_rng);
    }
    Tensor normed = layer_norm(x, ln1_g, ln1_b);
    Tensor attn =
        multi_head_attention(q.forward(normed), k.forward(normed), v.forward(normed), heads, bias, mask);
    Tensor a = add(x, out_proj.forward(attn));
    Tensor f = ffn2.forward(relu(ffn1.forward(layer_norm(a, ln2_g, ln2_b))));
    Tensor out = add(a, f);
    if (mask.any()) out = mul(out, mask.row_gate(out.cols()));
    return out;
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    q.register_params(reg, prefix + ".q");
    k.register_params(reg, prefix + ".k");
    v.register_params(reg, prefix + ".v");
    out_proj.register_params(reg, prefix + ".o");
    ffn1.register_params(reg, prefix + ".ffn1");
    ffn2.register_params(reg, prefix + ".ffn2");
    predictor.register_params(reg, prefix + ".predictor");
    reg.add(prefix + ".ln1_g", ln1_g);
    reg.add(prefix + ".ln1_b", ln1_b);
    reg.add(prefix + ".ln2_g", ln2_g);
    reg.add(prefix + ".ln2_b", ln2_b);
  }
};

}  // namespace compass
