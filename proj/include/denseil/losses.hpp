#pragma once

#include <span>
#include <vector>

#include "denseil/tensor.hpp"

namespace denseil {

/// Mean over rows of -log softmax(logits)[label]. No label smoothing.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Batch-hard triplet loss with Euclidean (not squared) distances:
///   mean_a max(0, margin + max_{p~a, p!=a} D(a,p) - min_{n!~a} D(a,n)).
/// Ties in max/min go to the lowest index. The gradient of D at 0 is 0.
/// Every identity needs >= 2 samples and the batch >= 2 identities.
Tensor batch_hard_triplet(const Tensor& embeddings, std::span<const int> labels,
                          double margin);

/// Hardest positive / negative per anchor, as selected by batch_hard_triplet.
struct TripletSelection {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};
TripletSelection hardest_pairs(const Tensor& embeddings, std::span<const int> labels);

}  // namespace denseil
