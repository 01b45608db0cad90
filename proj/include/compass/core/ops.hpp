#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "compass/core/tensor.hpp"

namespace compass {

namespace detail {

// c(m x n) += a(m x k) * b(k x n)
inline void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c(m x n) += a(m x k) * b(n x k)^T
inline void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c(m x n) += a(k x m)^T * b(k x n)
inline void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

inline void ensure_finite(const Tensor& t, const char* op) {
  for (double v : t.vec())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

inline bool grad_any(const Tensor& a) { return a.requires_grad(); }
template <typename... Ts>
inline bool grad_any(const Tensor& a, const Ts&... rest) {
  return a.requires_grad() || grad_any(rest...);
}

template <typename Fn>
inline void maybe_record(Tensor& out, bool any_grad, std::initializer_list<Tensor> inputs, Fn&& rule) {
  out.set_requires_grad(any_grad);
  if (GradTape* tape = GradTape::current(); tape && any_grad) tape->record(std::forward<Fn>(rule), inputs, out);
}

}  // namespace detail

// ---- elementwise arithmetic ----
// Each backward rule accumulates only into inputs that require gradients;
// frozen tensors stay untouched.

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  detail::ensure_finite(out, "add");
  detail::maybe_record(out, detail::grad_any(a, b), {a, b}, [a, b, out] {
    const auto& g = out.grad_acc();
    if (a.requires_grad()) {
      auto& ga = a.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  detail::ensure_finite(out, "sub");
  detail::maybe_record(out, detail::grad_any(a, b), {a, b}, [a, b, out] {
    const auto& g = out.grad_acc();
    if (a.requires_grad()) {
      auto& ga = a.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  detail::ensure_finite(out, "mul");
  detail::maybe_record(out, detail::grad_any(a, b), {a, b}, [a, b, out] {
    const auto& g = out.grad_acc();
    if (a.requires_grad()) {
      auto& ga = a.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
    }
  });
  return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] / b.data()[i];
  detail::ensure_finite(out, "div");
  detail::maybe_record(out, detail::grad_any(a, b), {a, b}, [a, b, out] {
    const auto& g = out.grad_acc();
    if (a.requires_grad()) {
      auto& ga = a.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / b.data()[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double binv = 1.0 / b.data()[i];
        gb[i] -= g[i] * a.data()[i] * binv * binv;
      }
    }
  });
  return out;
}

inline Tensor neg(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = -a.data()[i];
  detail::maybe_record(out, a.requires_grad(), {a}, [a, out] {
    const auto& g = out.grad_acc();
    auto& ga = a.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
  return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + c;
  detail::ensure_finite(out, "add_scalar");
  detail::maybe_record(out, a.requires_grad(), {a}, [a, out] {
    const auto& g = out.grad_acc();
    auto& ga = a.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
  detail::ensure_finite(out, "mul_scalar");
  detail::maybe_record(out, a.requires_grad(), {a}, [a, out, c] {
    const auto& g = out.grad_acc();
    auto& ga = a.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
  return out;
}

// Broadcast multiply by a one-element tensor (learnable scalar).
inline Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("scale: scale factor must have exactly one element");
  Tensor out = Tensor::zeros(x.shape());
  const double sv = s.data()[0];
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * sv;
  detail::ensure_finite(out, "scale");
  detail::maybe_record(out, detail::grad_any(x, s), {x, s}, [x, s, out] {
    const auto& g = out.grad_acc();
    const double sv = s.data()[0];
    if (x.requires_grad()) {
      auto& gx = x.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
    }
    if (s.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.data()[i];
      s.grad_acc()[0] += acc;
    }
  });
  return out;
}

// m(r x c) + v broadcast over rows; v is [c] or [1 x c].
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  const std::size_t r = m.rows(), c = m.cols();
  if (v.size() != c)
    throw std::invalid_argument("add_rowvec: vector length " + std::to_string(v.size()) + " != columns " +
                                std::to_string(c));
  Tensor out = Tensor::zeros(m.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[i * c + j] = m.data()[i * c + j] + v.data()[j];
  detail::ensure_finite(out, "add_rowvec");
  detail::maybe_record(out, detail::grad_any(m, v), {m, v}, [m, v, out, r, c] {
    const auto& g = out.grad_acc();
    if (m.requires_grad()) {
      auto& gm = m.grad_acc();
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (v.requires_grad()) {
      auto& gv = v.grad_acc();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
    }
  });
  return out;
}

// ---- matrix ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  detail::mm_nn_acc(a.data(), b.data(), out.data(), m, k, n);
  detail::ensure_finite(out, "matmul");
  detail::maybe_record(out, detail::grad_any(a, b), {a, b}, [a, b, out, m, k, n] {
    const auto& g = out.grad_acc();
    if (a.requires_grad()) detail::mm_nt_acc(g.data(), b.data(), a.grad_acc().data(), m, n, k);  // ga += g b^T
    if (b.requires_grad()) detail::mm_tn_acc(a.data(), g.data(), b.grad_acc().data(), k, m, n);  // gb += a^T g
  });
  return out;
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  detail::maybe_record(out, a.requires_grad(), {a}, [a, out, r, c] {
    const auto& g = out.grad_acc();
    auto& ga = a.grad_acc();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
  return out;
}

// ---- nonlinearities ----

enum class Activation { sigmoid, tanh, relu };

inline Tensor activation(const Tensor& x, Activation kind) {
  Tensor out = Tensor::zeros(x.shape());
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      }
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > 0 ? x.data()[i] : 0.0;
      break;
  }
  detail::ensure_finite(out, "activation");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, kind] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    switch (kind) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = out.data()[i];
          gx[i] += g[i] * y * (1.0 - y);
        }
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = out.data()[i];
          gx[i] += g[i] * (1.0 - y * y);
        }
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x.data()[i] > 0 ? g[i] : 0.0;
        break;
    }
  });
  return out;
}

inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor tanh_act(const Tensor& x) { return activation(x, Activation::tanh); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }

inline Tensor softplus(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  detail::ensure_finite(out, "softplus");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.data()[i];
      const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      gx[i] += g[i] * s;
    }
  });
  return out;
}

inline Tensor exp(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::exp(x.data()[i]);
  detail::ensure_finite(out, "exp");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out.data()[i];
  });
  return out;
}

inline Tensor log(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::log(x.data()[i]);
  detail::ensure_finite(out, "log");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x.data()[i];
  });
  return out;
}

// Clamp with pass-through gradient strictly inside the interval.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::min(hi, std::max(lo, x.data()[i]));
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, lo, hi] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.data()[i];
      if (v > lo && v < hi) gx[i] += g[i];
    }
  });
  return out;
}

// x^p for a fixed exponent; x is expected non-negative where p is fractional.
inline Tensor pow_const(const Tensor& x, double p) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::pow(x.data()[i], p);
  detail::ensure_finite(out, "pow_const");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, p] {
    if (p == 0.0) return;
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = p == 1.0 ? 1.0 : p * std::pow(x.data()[i], p - 1.0);
      if (std::isfinite(d)) gx[i] += g[i] * d;
    }
  });
  return out;
}

// ---- softmax / dropout ----

// Rows of the last dimension normalized to a distribution; max-subtracted
// for stability.
inline Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() < 1) throw std::invalid_argument("softmax_lastdim: last dimension must be >= 1");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data() + r * n;
    double* yi = out.data() + r * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      denom += yi[j];
    }
    for (std::size_t j = 0; j < n; ++j) yi[j] /= denom;
  }
  detail::ensure_finite(out, "softmax_lastdim");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, rows, n] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = out.data() + r * n;
      const double* gr = g.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (gr[j] - dot);
    }
  });
  return out;
}

// Inverted dropout. Eval mode and rate 0 are exact identities (the input
// tensor is returned, gradient slot included).
inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (rate >= 1.0 || rate < 0.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng.uniform() >= rate ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  detail::ensure_finite(out, "dropout");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, mask] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
  return out;
}

// ---- reductions ----

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.vec()) acc += v;
  Tensor out = Tensor::scalar(acc);
  detail::ensure_finite(out, "sum");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out] {
    const double g = out.grad_acc()[0];
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
  return out;
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (double v : x.vec()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor out = Tensor::scalar(acc * inv);
  detail::ensure_finite(out, "mean");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, inv] {
    const double g = out.grad_acc()[0] * inv;
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
  return out;
}

// Column sums: [r x c] -> [1 x c].
inline Tensor sum_axis0(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j] += x.data()[i * c + j];
  detail::ensure_finite(out, "sum_axis0");
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, r, c] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j];
  });
  return out;
}

// Column means: [r x c] -> [1 x c].
inline Tensor mean_axis0(const Tensor& x) {
  Tensor s = sum_axis0(x);
  return mul_scalar(s, 1.0 / static_cast<double>(x.rows()));
}

// ---- shape ops ----

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  bool any = false;
  for (const Tensor& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row count mismatch");
    total += p.cols();
    any = any || p.requires_grad();
  }
  Tensor out = Tensor::zeros({r, total});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out.data()[i * total + off + j] = p.data()[i * c + j];
    off += c;
  }
  out.set_requires_grad(any);
  if (GradTape* tape = GradTape::current(); tape && any) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    auto rule = [held, out, r, total] {
      const auto& g = out.grad_acc();
      std::size_t off = 0;
      for (const Tensor& p : held) {
        const std::size_t c = p.cols();
        if (p.requires_grad()) {
          auto& gp = p.grad_acc();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
        }
        off += c;
      }
    };
    tape->record(std::move(rule), held, out);
  }
  return out;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Tensor parts[2] = {a, b};
  return concat_cols(std::span<const Tensor>(parts, 2));
}

inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  bool any = false;
  for (const Tensor& p : parts) {
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column count mismatch");
    total += p.rows();
    any = any || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total, c});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off * c);
    off += p.rows();
  }
  out.set_requires_grad(any);
  if (GradTape* tape = GradTape::current(); tape && any) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    auto rule = [held, out, c] {
      const auto& g = out.grad_acc();
      std::size_t off = 0;
      for (const Tensor& p : held) {
        if (p.requires_grad()) {
          auto& gp = p.grad_acc();
          for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[off * c + i];
        }
        off += p.rows();
      }
    };
    tape->record(std::move(rule), held, out);
  }
  return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  const Tensor parts[2] = {a, b};
  return concat_rows(std::span<const Tensor>(parts, 2));
}

inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  const std::size_t r = x.rows(), c = x.cols();
  if (c0 >= c1 || c1 > c) throw std::invalid_argument("slice_cols: bad range");
  const std::size_t w = c1 - c0;
  Tensor out = Tensor::zeros({r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out.data()[i * w + j] = x.data()[i * c + c0 + j];
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, r, c, c0, w] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + c0 + j] += g[i * w + j];
  });
  return out;
}

inline Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  const std::size_t r = x.rows(), c = x.cols();
  if (r0 >= r1 || r1 > r) throw std::invalid_argument("slice_rows: bad range");
  const std::size_t h = r1 - r0;
  Tensor out = Tensor::zeros({h, c});
  std::copy(x.data() + r0 * c, x.data() + r1 * c, out.data());
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out, r0, c, h] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < h * c; ++i) gx[r0 * c + i] += g[i];
  });
  return out;
}

inline Tensor select_row(const Tensor& x, std::size_t i) { return slice_rows(x, i, i + 1); }

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = Tensor::zeros(std::move(shape));
  std::copy(x.data(), x.data() + x.size(), out.data());
  detail::maybe_record(out, x.requires_grad(), {x}, [x, out] {
    const auto& g = out.grad_acc();
    auto& gx = x.grad_acc();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

// Rows of `table` gathered by id: [V x d], ids(L) -> [L x d].
inline Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
  const std::size_t v = table.rows(), d = table.cols();
  Tensor out = Tensor::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) throw std::invalid_argument("embedding_lookup: id out of range");
    std::copy(table.data() + ids[i] * d, table.data() + (ids[i] + 1) * d, out.data() + i * d);
  }
  detail::maybe_record(out, table.requires_grad(), {table}, [table, out, ids, d] {
    const auto& g = out.grad_acc();
    auto& gt = table.grad_acc();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
  });
  return out;
}

// Row-wise layer normalization over the last dimension with learnable
// gain/bias vectors of length cols.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c) throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  Tensor out = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = x.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xi[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (xi[j] - mu) * is;
      (*xhat)[i * c + j] = xh;
      out.data()[i * c + j] = xh * gain.data()[j] + bias.data()[j];
    }
  }
  detail::ensure_finite(out, "layer_norm");
  detail::maybe_record(out, detail::grad_any(x, gain, bias), {x, gain, bias},
                       [x, gain, bias, out, xhat, inv_std, r, c] {
                         const auto& g = out.grad_acc();
                         for (std::size_t i = 0; i < r; ++i) {
                           if (x.requires_grad()) {
                             auto& gx = x.grad_acc();
                             const double is = (*inv_std)[i];
                             double mean_dg = 0.0, mean_dgx = 0.0;
                             for (std::size_t j = 0; j < c; ++j) {
                               const double dg = g[i * c + j] * gain.data()[j];
                               mean_dg += dg;
                               mean_dgx += dg * (*xhat)[i * c + j];
                             }
                             mean_dg /= static_cast<double>(c);
                             mean_dgx /= static_cast<double>(c);
                             for (std::size_t j = 0; j < c; ++j) {
                               const double xh = (*xhat)[i * c + j];
                               const double dg = g[i * c + j] * gain.data()[j];
                               gx[i * c + j] += is * (dg - mean_dg - xh * mean_dgx);
                             }
                           }
                           if (gain.requires_grad()) {
                             auto& gg = gain.grad_acc();
                             for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * (*xhat)[i * c + j];
                           }
                           if (bias.requires_grad()) {
                             auto& gb = bias.grad_acc();
                             for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                           }
                         }
                       });
  return out;
}

}  // namespace compass
