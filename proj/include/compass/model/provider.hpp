#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <string>

#include "compass/bio/alphabet.hpp"
#include "compass/model/checkpoint.hpp"
#include "compass/model/config.hpp"
#include "compass/nn/transformer.hpp"

namespace compass {

// Per-residue descriptor row for one letter, z-scored over the canonical
// residues. The pad residue maps to zeros.
inline Tensor embed_physchem(char residue) {
  const auto& row = physchem_normalized()[residue_index(residue)];
  return Tensor::from({1, 4}, {row[0], row[1], row[2], row[3]});
}

// Maps a sequence to an L x dim representation. Deterministic in eval
// mode; pad ('X') rows are exactly zero.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual Tensor embed(const std::string& seq, Mode mode, Rng& dropout_rng) const = 0;
  virtual void register_params(ParamRegistry&, const std::string&) const {}
  virtual void set_adapters_enabled(bool) {}
};

namespace detail {

inline PadMask pad_mask_of(const std::string& seq) {
  std::vector<bool> masked(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) masked[i] = seq[i] == kPadResidue;
  return PadMask::from(masked);
}

inline Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor t = Tensor::zeros({length, dim});
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / dim);
      t.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return t;
}

}  // namespace detail

// Frozen random-weight stand-in for a pretrained sequence encoder: token
// embedding + sinusoidal positions + transformer layers whose q/k/v carry
// trainable low-rank adapters.
class ToyEncoderProvider final : public EmbeddingProvider {
 public:
  ToyEncoderProvider(std::size_t d_model, std::size_t layers, std::size_t heads, std::size_t ffn_mult,
                     const LoraConfig& lora, Rng& rng)
      : d_(d_model) {
    token_table_ = Tensor::randn({kAlphabetSize, d_model}, rng, 1.0, /*requires_grad=*/false);
    for (std::size_t j = 0; j < d_model; ++j) token_table_.at(kPadIndex, j) = 0.0;  // pad embeds to zero
    for (std::size_t l = 0; l < layers; ++l)
      layers_.push_back(EncoderLayer::init(d_model, heads, ffn_mult * d_model, lora.rank, lora.alpha, lora.dropout, rng));
  }

  std::size_t dim() const override { return d_; }

  Tensor embed(const std::string& seq, Mode mode, Rng& dropout_rng) const override {
    Tensor x = add(embedding_lookup(token_table_, encode_sequence(seq)), detail::sinusoidal_positions(seq.size(), d_));
    PadMask mask = detail::pad_mask_of(seq);
    if (mask.any()) x = mul(x, mask.row_gate(d_));
    for (const auto& layer : layers_) x = layer.forward(x, mode, dropout_rng, mask);
    return x;
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const override {
    reg.add(prefix + ".tokens", token_table_);
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].register_params(reg, prefix + ".layer" + std::to_string(l));
  }

  void set_adapters_enabled(bool enabled) override {
    for (auto& layer : layers_) layer.set_adapters_enabled(enabled);
  }

  std::vector<EncoderLayer>& layers() { return layers_; }

 private:
  std::size_t d_;
  Tensor token_table_;
  std::vector<EncoderLayer> layers_;
};

// Chemical track: fixed physicochemical descriptors concatenated with a
// small learned residue embedding.
class PhyschemProvider final : public EmbeddingProvider {
 public:
  PhyschemProvider(std::size_t learned_dim, Rng& rng) : learned_dim_(learned_dim) {
    if (learned_dim_ > 0) {
      learned_table_ = Tensor::randn({kAlphabetSize, learned_dim_}, rng, 0.5, /*requires_grad=*/true);
      for (std::size_t j = 0; j < learned_dim_; ++j) learned_table_.at(kPadIndex, j) = 0.0;
    }
    const auto& norm = physchem_normalized();
    phys_table_ = Tensor::zeros({kAlphabetSize, 4});
    for (std::size_t r = 0; r < kAlphabetSize; ++r)
      for (std::size_t c = 0; c < 4; ++c) phys_table_.at(r, c) = norm[r][c];
  }

  std::size_t dim() const override { return 4 + learned_dim_; }

  Tensor embed(const std::string& seq, Mode, Rng&) const override {
    const auto ids = encode_sequence(seq);
    Tensor phys = embedding_lookup(phys_table_, ids);
    Tensor out = learned_dim_ > 0 ? concat_cols(phys, embedding_lookup(learned_table_, ids)) : phys;
    PadMask mask = detail::pad_mask_of(seq);
    // the pad row of the learned table would drift under training without
    // this gate; it also pins the provider contract output to exact zeros
    if (mask.any()) out = mul(out, mask.row_gate(dim()));
    return out;
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const override {
    if (learned_dim_ > 0) reg.add(prefix + ".residue_embed", learned_table_);
  }

 private:
  std::size_t learned_dim_;
  Tensor learned_table_;
  Tensor phys_table_;
};

// Precomputed per-residue embeddings keyed by the exact sequence string.
// Binary layout (little-endian): "CEMB" | u32 version | u32 dim |
// u64 count | per entry: u32 seq_len, seq bytes, f64 payload[len x dim].
class FileBackedProvider final : public EmbeddingProvider {
 public:
  FileBackedProvider(std::size_t dim) : dim_(dim) {}

  static FileBackedProvider load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("embeddings: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CEMB", 4) != 0) throw DataError("embeddings: bad magic in '" + path + "'");
    const auto version = detail::read_le<std::uint32_t>(in);
    if (version != 1) throw DataError("embeddings: unsupported version");
    const auto dim = detail::read_le<std::uint32_t>(in);
    FileBackedProvider p(dim);
    const auto count = detail::read_le<std::uint64_t>(in);
    for (std::uint64_t e = 0; e < count; ++e) {
      const auto len = detail::read_le<std::uint32_t>(in);
      std::string seq(len, '\0');
      in.read(seq.data(), len);
      if (!in) throw DataError("embeddings: truncated file");
      std::vector<double> payload(static_cast<std::size_t>(len) * dim);
      for (double& v : payload) v = detail::read_le<double>(in);
      p.store_[seq] = std::move(payload);
    }
    return p;
  }

  static void save(const std::string& path, std::size_t dim,
                   const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("embeddings: cannot write '" + path + "'");
    out.write("CEMB", 4);
    detail::write_le<std::uint32_t>(out, 1);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    detail::write_le<std::uint64_t>(out, entries.size());
    for (const auto& [seq, payload] : entries) {
      if (payload.size() != seq.size() * dim) throw DataError("embeddings: payload size mismatch for a sequence");
      detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq.size()));
      out.write(seq.data(), static_cast<std::streamsize>(seq.size()));
      for (double v : payload) detail::write_le<double>(out, v);
    }
  }

  void add(const std::string& seq, std::vector<double> payload) {
    if (payload.size() != seq.size() * dim_) throw DataError("embeddings: payload size mismatch");
    store_[seq] = std::move(payload);
  }

  std::size_t dim() const override { return dim_; }

  Tensor embed(const std::string& seq, Mode, Rng&) const override {
    auto it = store_.find(seq);
    if (it == store_.end()) throw DataError("embeddings: no entry for sequence '" + seq + "'");
    Tensor out = Tensor::from({seq.size(), dim_}, it->second);
    PadMask mask = detail::pad_mask_of(seq);
    if (mask.any()) out = mul(out, mask.row_gate(dim_));
    return out;
  }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>> store_;
};

}  // namespace compass
