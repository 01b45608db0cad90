#pragma once

#include <cmath>
#include <vector>

#include "compass/core/tensor.hpp"

namespace compass {

// Adam with bias correction. Parameters update in registration order, in
// place; gradients are consumed (zeroed) by step().
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& p = params_[k];
      const std::vector<double> g = p.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g[i];
        v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g[i] * g[i];
        const double mhat = m_[k][i] / bc1;
        const double vhat = v_[k][i] / bc2;
        p.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace compass
