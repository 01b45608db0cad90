#pragma once

#include "compass/nn/linear.hpp"

namespace compass {

// Classification head: two-layer relu MLP plus a skip connection from the
// input. The skip is the identity when input and output widths agree and a
// learned projection otherwise.
struct ResidualMlpHead {
  Linear hidden;  // d_hidden x d_in
  Linear out;     // C x d_hidden
  Tensor skip;    // C x d_in, undefined when the skip is the identity
  std::size_t d_in = 0, num_out = 0;

  static ResidualMlpHead init(std::size_t num_out, std::size_t d_hidden, std::size_t d_in, Rng& rng) {
    ResidualMlpHead h;
    h.hidden = Linear::init(d_hidden, d_in, rng);
    h.out = Linear::init(num_out, d_hidden, rng);
    if (num_out != d_in)
      h.skip = Tensor::randn({num_out, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)), true);
    h.d_in = d_in;
    h.num_out = num_out;
    return h;
  }

  static ResidualMlpHead zeros(std::size_t num_out, std::size_t d_hidden, std::size_t d_in) {
    ResidualMlpHead h;
    h.hidden = Linear::zeros(d_hidden, d_in);
    h.out = Linear::zeros(num_out, d_hidden);
    if (num_out != d_in) h.skip = Tensor::zeros({num_out, d_in}, true);
    h.d_in = d_in;
    h.num_out = num_out;
    return h;
  }

  Tensor forward(const Tensor& h) const {
    Tensor main = out.forward(relu(hidden.forward(h)));
    Tensor skipped = skip.defined() ? matmul(h, transpose(skip)) : h;
    return add(main, skipped);
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    hidden.register_params(reg, prefix + ".hidden");
    out.register_params(reg, prefix + ".out");
    if (skip.defined()) reg.add(prefix + ".skip", skip);
  }
};

inline Tensor residual_mlp_head(const Tensor& h, const ResidualMlpHead& head) { return head.forward(h); }

}  // namespace compass
