#pragma once

#include <cmath>
#include <string>

#include "compass/core/ops.hpp"
#include "compass/core/rng.hpp"

namespace compass {

// Ordered name -> tensor map. Registration order is the update and
// serialization order, so it must be deterministic.
class ParamRegistry {
 public:
  void add(const std::string& name, const Tensor& t) {
    for (const auto& [n, _] : items_)
      if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
    items_.emplace_back(name, t);
  }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : items_)
      if (t.requires_grad()) out.push_back(t);
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// y = x W^T + b for row-stacked inputs.
struct Linear {
  Tensor weight;  // d_out x d_in
  Tensor bias;    // d_out

  static Linear init(std::size_t d_out, std::size_t d_in, Rng& rng, bool trainable = true) {
    Linear l;
    l.weight = Tensor::randn({d_out, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)), trainable);
    l.bias = Tensor::zeros({d_out}, trainable);
    return l;
  }

  static Linear zeros(std::size_t d_out, std::size_t d_in, bool trainable = true) {
    Linear l;
    l.weight = Tensor::zeros({d_out, d_in}, trainable);
    l.bias = Tensor::zeros({d_out}, trainable);
    return l;
  }

  Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, transpose(weight)), bias); }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".W", weight);
    reg.add(prefix + ".b", bias);
  }
};

// Base linear with a trainable low-rank delta: y = Wx + b + (alpha/r) * B A dropout(x).
// B starts at zero so a fresh adapter is an exact no-op; the base weight is
// typically frozen.
struct LoraLinear {
  Tensor weight;  // d_out x d_in, frozen when frozen_base
  Tensor bias;    // d_out
  Tensor down;    // r x d_in   (A)
  Tensor up;      // d_out x r  (B), zero-initialized
  std::size_t rank = 0;
  double scale = 0.0;  // lora_alpha / rank
  double dropout_rate = 0.0;
  bool adapter_enabled = true;

  static LoraLinear init(std::size_t d_out, std::size_t d_in, std::size_t r, double lora_alpha, double dropout,
                         Rng& rng, bool freeze_base = true) {
    LoraLinear l;
    l.weight = Tensor::randn({d_out, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)), !freeze_base);
    l.bias = Tensor::zeros({d_out}, !freeze_base);
    l.down = Tensor::randn({r, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)), true);
    l.up = Tensor::zeros({d_out, r}, true);
    l.rank = r;
    l.scale = lora_alpha / static_cast<double>(r);
    l.dropout_rate = dropout;
    return l;
  }

  Tensor forward(const Tensor& x, Mode mode, Rng& dropout_rng) const {
    Tensor base = add_rowvec(matmul(x, transpose(weight)), bias);
    if (!adapter_enabled) return base;
    Tensor h = dropout(x, dropout_rate, mode, dropout_rng);
    Tensor delta = matmul(matmul(h, transpose(down)), transpose(up));
    return add(base, mul_scalar(delta, scale));
  }

  void set_trainable_adapters(bool trainable) {
    down.set_requires_grad(trainable);
    up.set_requires_grad(trainable);
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".W", weight);
    reg.add(prefix + ".b", bias);
    reg.add(prefix + ".lora_A", down);
    reg.add(prefix + ".lora_B", up);
  }
};

// Two-layer perceptron with relu: W2 relu(W1 x + b1) + b2.
struct Mlp2 {
  Linear first;
  Linear second;

  static Mlp2 init(std::size_t d_out, std::size_t d_hidden, std::size_t d_in, Rng& rng) {
    Mlp2 m;
    m.first = Linear::init(d_hidden, d_in, rng);
    m.second = Linear::init(d_out, d_hidden, rng);
    return m;
  }

  static Mlp2 zeros(std::size_t d_out, std::size_t d_hidden, std::size_t d_in) {
    Mlp2 m;
    m.first = Linear::zeros(d_hidden, d_in);
    m.second = Linear::zeros(d_out, d_hidden);
    return m;
  }

  Tensor forward(const Tensor& x) const { return second.forward(relu(first.forward(x))); }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    first.register_params(reg, prefix + ".fc1");
    second.register_params(reg, prefix + ".fc2");
  }
};

}  // namespace compass
