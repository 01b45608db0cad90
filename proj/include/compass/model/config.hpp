#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "compass/core/error.hpp"

namespace compass {

struct LoraConfig {
  std::size_t rank = 16;
  double alpha = 16.0;
  double dropout = 0.1;
  bool enabled = true;
};

struct PromptConfig {
  bool enabled = true;
  double alpha_init = 0.1;
  double dropout = 0.1;
  bool share_bias_across_layers = false;
  bool predictor_shares_head = false;
};

struct ModelConfig {
  std::size_t num_types = 4;
  std::size_t d_model = 32;       // protein track width
  std::size_t d_chem_embed = 8;   // learned part of the chemical track (+4 fixed descriptors)
  std::size_t heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t prompt_layers = 2;
  std::size_t ffn_mult = 2;
  std::size_t fusion_hidden = 32;
  std::size_t head_hidden = 32;
  std::size_t max_peptide_len = 50;
  std::size_t pair_window = 15;
  std::size_t stage2_dim = 32;
  std::size_t stage2_hidden = 32;
  std::size_t enzyme_truncate = 1024;
  LoraConfig lora;
  PromptConfig prompt;
  std::string fusion_variant = "gated";       // gated | concat | sum
  std::string stage2_fusion = "dual_gated";   // dual_gated | concat | sum
  std::string stage2_source = "center";       // center | mean
  std::string loss_variant = "hybrid";        // hybrid | dice | focal | bce
  double eta_raw_init = 0.0;
  double omega_raw_init = -2.0;
};

struct TrainConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;   // 256 at full scale
  std::size_t max_epochs = 20;   // 100 at full scale
  std::size_t patience = 8;      // early stop on validation macro-F1
  double stop_at_val_f1 = 2.0;   // > 1 disables the target stop
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const LoraConfig& c) {
  j = {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout}, {"enabled", c.enabled}};
}
inline void from_json(const nlohmann::json& j, LoraConfig& c) {
  c.rank = j.value("rank", c.rank);
  c.alpha = j.value("alpha", c.alpha);
  c.dropout = j.value("dropout", c.dropout);
  c.enabled = j.value("enabled", c.enabled);
}

inline void to_json(nlohmann::json& j, const PromptConfig& c) {
  j = {{"enabled", c.enabled},
       {"alpha_init", c.alpha_init},
       {"dropout", c.dropout},
       {"share_bias_across_layers", c.share_bias_across_layers},
       {"predictor_shares_head", c.predictor_shares_head}};
}
inline void from_json(const nlohmann::json& j, PromptConfig& c) {
  c.enabled = j.value("enabled", c.enabled);
  c.alpha_init = j.value("alpha_init", c.alpha_init);
  c.dropout = j.value("dropout", c.dropout);
  c.share_bias_across_layers = j.value("share_bias_across_layers", c.share_bias_across_layers);
  c.predictor_shares_head = j.value("predictor_shares_head", c.predictor_shares_head);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_types", c.num_types},
       {"d_model", c.d_model},
       {"d_chem_embed", c.d_chem_embed},
       {"heads", c.heads},
       {"encoder_layers", c.encoder_layers},
       {"prompt_layers", c.prompt_layers},
       {"ffn_mult", c.ffn_mult},
       {"fusion_hidden", c.fusion_hidden},
       {"head_hidden", c.head_hidden},
       {"max_peptide_len", c.max_peptide_len},
       {"pair_window", c.pair_window},
       {"stage2_dim", c.stage2_dim},
       {"stage2_hidden", c.stage2_hidden},
       {"enzyme_truncate", c.enzyme_truncate},
       {"lora", c.lora},
       {"prompt", c.prompt},
       {"fusion_variant", c.fusion_variant},
       {"stage2_fusion", c.stage2_fusion},
       {"stage2_source", c.stage2_source},
       {"loss_variant", c.loss_variant},
       {"eta_raw_init", c.eta_raw_init},
       {"omega_raw_init", c.omega_raw_init}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.num_types = j.value("num_types", c.num_types);
  c.d_model = j.value("d_model", c.d_model);
  c.d_chem_embed = j.value("d_chem_embed", c.d_chem_embed);
  c.heads = j.value("heads", c.heads);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.prompt_layers = j.value("prompt_layers", c.prompt_layers);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.fusion_hidden = j.value("fusion_hidden", c.fusion_hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.max_peptide_len = j.value("max_peptide_len", c.max_peptide_len);
  c.pair_window = j.value("pair_window", c.pair_window);
  c.stage2_dim = j.value("stage2_dim", c.stage2_dim);
  c.stage2_hidden = j.value("stage2_hidden", c.stage2_hidden);
  c.enzyme_truncate = j.value("enzyme_truncate", c.enzyme_truncate);
  c.lora = j.value("lora", c.lora);
  c.prompt = j.value("prompt", c.prompt);
  c.fusion_variant = j.value("fusion_variant", c.fusion_variant);
  c.stage2_fusion = j.value("stage2_fusion", c.stage2_fusion);
  c.stage2_source = j.value("stage2_source", c.stage2_source);
  c.loss_variant = j.value("loss_variant", c.loss_variant);
  c.eta_raw_init = j.value("eta_raw_init", c.eta_raw_init);
  c.omega_raw_init = j.value("omega_raw_init", c.omega_raw_init);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"batch_size", c.batch_size},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"stop_at_val_f1", c.stop_at_val_f1},
       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.stop_at_val_f1 = j.value("stop_at_val_f1", c.stop_at_val_f1);
  c.seed = j.value("seed", c.seed);
}

// FNV-1a over the canonical JSON dump; identifies a configuration in
// checkpoints and run manifests.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t config_hash(const ModelConfig& model, std::uint64_t init_seed) {
  nlohmann::json j;
  j["model"] = model;
  j["init_seed"] = init_seed;
  return fnv1a64(j.dump());
}

}  // namespace compass
