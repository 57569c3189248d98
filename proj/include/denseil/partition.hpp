#pragma once

#include <string>
#include <vector>

#include "denseil/encoder.hpp"
#include "denseil/rng.hpp"
#include "denseil/tensor.hpp"

namespace denseil {

struct TokenIndex {
  int frame = 0;  // 1-based
  int part = 0;   // 1-based
};

/// Stacked part vectors, frame-major: row (i-1)*P + (p-1) holds z_i^p.
struct TokenMatrix {
  Tensor tokens;
  int frames = 0;
  int parts = 0;
  std::vector<TokenIndex> index;

  static TokenMatrix make(Tensor tokens, int frames, int parts);
  std::size_t rows() const { return static_cast<std::size_t>(frames) * parts; }
};

/// Band-pool one block output [I x C x H x W] into [(I*P) x C].
Tensor ppool(const Tensor& block, int parts);

/// Adapted token matrices for every encoder block. Blocks not listed in
/// `needed` are left undefined (tokens.defined() == false).
struct PartitionedPyramid {
  TokenMatrix last;
  std::vector<TokenMatrix> intermediate;  // Z^1 .. Z^{L-1}

  const TokenMatrix& block(int b) const;  // 1-based
};

std::string adapter_param_name(int block);  // 1-based

/// One bias-free [C_l x width] adapter per encoder block.
void init_adapter_params(const EncoderConfig& enc, int width, ParamStore& params,
                         CounterRng& rng);

/// Pools every block with P bands and maps it to the decoder width through
/// that block's adapter. `needed` lists 1-based blocks; empty means all.
PartitionedPyramid stack_partitions(const FeaturePyramid& pyramid, int parts,
                                    const ParamStore& params,
                                    const std::vector<int>& needed = {});

}  // namespace denseil
