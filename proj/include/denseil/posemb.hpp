#pragma once

#include <memory>

#include "denseil/tensor.hpp"

namespace denseil {

// Sinusoidal positional tables with 1-based indices. For position q and
// hidden index j in 1..d the entry is sin(q / 10000^(j/d)) when j is even
// and cos(q / 10000^(j/d)) when j is odd; column j-1 stores index j.

/// [P x d], rows are partitions p = 1..P.
Tensor spatial_pos(int parts, int width);
/// [I x d], rows are frames i = 1..I.
Tensor temporal_pos(int frames, int width);

/// Spatio-temporal table: combined row (i-1)*P + (p-1) = spatial[p] + temporal[i].
struct StepEmbTable {
  int frames = 0;
  int parts = 0;
  int width = 0;
  Tensor spatial;
  Tensor temporal;
  Tensor combined;
};

/// Cached per (I, P, d); the returned table is immutable and shareable.
std::shared_ptr<const StepEmbTable> step_emb(int frames, int parts, int width);

}  // namespace denseil
