#pragma once

#include <cmath>

#include "denseil/rng.hpp"
#include "denseil/tensor.hpp"

namespace denseil::init {

inline Tensor normal(Shape shape, double stddev, CounterRng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v));
}

/// Glorot-uniform for a [fan_in x fan_out] weight.
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from_values({fan_in, fan_out}, std::move(v));
}

}  // namespace denseil::init
