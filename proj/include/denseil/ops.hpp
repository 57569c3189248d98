#pragma once

#include <optional>
#include <span>
#include <vector>

#include "denseil/tensor.hpp"

// Differentiable ops. All of them are pure: they read their inputs and
// return a new tensor; gradients flow back through backward().

namespace denseil::ops {

// -- elementwise and shape ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x[n x m] + bias[m] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// ReLU; the subgradient at 0 is 0.
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
/// [n x d] -> [d]
Tensor mean_rows(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t length);
/// Stacks B vectors of length d into [B x d].
Tensor stack_rows(std::span<const Tensor> rows);

// -- linear algebra ----------------------------------------------------------

/// a[n x k] * b[k x m]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[n x k] * b[m x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x[n x a] * w[a x b] (+ bias[b])
Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias = {});
/// w2 * max(w1 * x + b1, 0) + b2 applied row-wise.
Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2);

// -- normalisation -----------------------------------------------------------

/// Row softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);

/// Per-row layer normalisation over the last axis of x[n x d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Per-channel normalisation of x viewed as [N x C x S] (S = product of the
/// trailing axes; S = 1 for a [B x C] matrix). With `fixed` the given
/// statistics are used; otherwise they are computed over N and S and
/// written to `batch_stats` if provided. Variance is the biased estimate.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  const NormStats* fixed, NormStats* batch_stats = nullptr);

// -- vision ------------------------------------------------------------------

/// 3x3 convolution, zero padding 1. x[N x Cin x H x W], w[Cin x 3 x 3 x Cout],
/// bias[Cout]; output [N x Cout x H/stride x W/stride].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride);

/// Height of each of `parts` horizontal bands over `height` rows. Leftover
/// rows go to the topmost bands.
std::vector<std::size_t> band_heights(std::size_t height, std::size_t parts);

/// Horizontal-band average pooling: x[N x C x H x W] -> [(N*P) x C], frame-major.
Tensor band_pool(const Tensor& x, std::size_t parts);

}  // namespace denseil::ops
