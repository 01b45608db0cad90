#pragma once

#include <vector>

#include "compass/core/rng.hpp"
#include "compass/core/tensor.hpp"

namespace testutil {

inline compass::Tensor random_tensor(compass::Shape shape, compass::Rng& rng, double lo = -1.0, double hi = 1.0) {
  compass::Tensor t = compass::Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline bool bitwise_equal(const compass::Tensor& a, const compass::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace testutil
