#pragma once

#include <functional>
#include <span>
#include <vector>

#include "denseil/decoder.hpp"
#include "denseil/metrics.hpp"
#include "denseil/rng.hpp"
#include "denseil/tensor.hpp"

namespace denseil::testing {

Tensor random_tensor(Shape shape, CounterRng& rng, double scale = 1.0,
                     bool requires_grad = true);

/// sum(y * R) for a fixed random R, turning any op output into a scalar
/// whose gradient is dense and O(1).
Tensor random_projection(const Tensor& y, CounterRng& rng);

/// Central-difference check of every element of every input:
///   ||g_analytic - g_numeric|| / max(||g_analytic|| + ||g_numeric||, 1e-12).
/// `loss` must read the inputs through their shared storage.
double grad_rel_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs,
                      double h = 1e-5);

// -- brute-force oracles, written with raw loops -------------------------------

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t);
Matrix layer_norm_oracle(const Matrix& x, std::span<const double> gamma,
                         std::span<const double> beta, double eps);
/// Per-query, per-head attention: softmax_k(q.k / sqrt(dh)) v, then wo.
Matrix attention_oracle(const Matrix& queries, const Matrix& kv, const AttentionParams& p,
                        int heads);
Matrix self_attention_oracle(const Matrix& h, const AttentionParams& p, int heads, double eps);
Matrix dense_attention_oracle(const Matrix& h, const std::vector<Matrix>& sources,
                              const DenseParams& p, Fusion fusion, int heads, double eps);

/// sin/cos of q / 10000^(j/d) evaluated directly for 1-based q and j.
double sinusoid_oracle(int q, int j, int d);

/// Rank-by-counting metric oracle: the rank of gallery entry g is the number
/// of admissible entries that sort before it (smaller distance, or equal
/// distance and smaller index).
struct MetricOracle {
  std::vector<double> cmc;  // 20 entries
  double map = 0.0;
  std::size_t valid = 0;
};
MetricOracle metric_oracle(const EvalTable& table, int max_rank = 20);

/// max over (p, n) pairs of [margin + D(a,p) - D(a,n)]_+, averaged over anchors.
double triplet_oracle(const Tensor& embeddings, std::span<const int> labels, double margin);

}  // namespace denseil::testing
