#pragma once

#include <algorithm>
#include <functional>

#include "compass/core/ops.hpp"
#include "compass/core/tensor.hpp"

namespace compass {

// Central-difference check of reverse-mode gradients. `f` must be scalar
// valued and deterministic across calls (fix dropout streams before use).
// Returns max over coordinates of |analytic - numeric| /
// max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5) {
  x.set_requires_grad(true);
  x.zero_grad();  // drop any gradient left over from earlier passes
  std::vector<double> analytic;
  {
    GradTape tape;
    GradTape::Scope scope(&tape);
    Tensor loss = f(x);
    if (loss.size() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
    tape.backward(loss);
    analytic = x.grad();
  }
  x.zero_grad();

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + eps;
    const double fp = f(x).value();
    x.data()[i] = saved - eps;
    const double fm = f(x).value();
    x.data()[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

// Convenience: checks several tensors against the same scalar function of
// all of them; returns the worst error over all coordinates of all tensors.
inline double grad_check_all(const std::function<Tensor()>& f, std::vector<Tensor> params, double eps = 1e-5) {
  double worst = 0.0;
  for (Tensor& p : params) {
    auto wrapped = [&](const Tensor&) { return f(); };
    worst = std::max(worst, grad_check(wrapped, p, eps));
  }
  return worst;
}

// Nudges values away from a kink (|v - kink| < margin) so relu-style
// non-smooth points do not poison finite differences.
inline void nudge_away_from(Tensor& t, double kink, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::abs(v - kink) < margin) v = v >= kink ? kink + margin : kink - margin;
  }
}

}  // namespace compass
