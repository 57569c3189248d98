#include "denseil/partition.hpp"

#include <algorithm>
#include <stdexcept>

#include "denseil/init.hpp"
#include "denseil/ops.hpp"

namespace denseil {

TokenMatrix TokenMatrix::make(Tensor tokens, int frames, int parts) {
  if (tokens.rank() != 2 || tokens.dim(0) != static_cast<std::size_t>(frames) * parts) {
    throw ShapeError("token matrix: expected " + std::to_string(frames * parts) +
                     " rows, got " + shape_str(tokens.shape()));
  }
  TokenMatrix m;
  m.tokens = std::move(tokens);
  m.frames = frames;
  m.parts = parts;
  m.index.reserve(m.rows());
  for (int i = 1; i <= frames; ++i) {
    for (int p = 1; p <= parts; ++p) m.index.push_back({i, p});
  }
  return m;
}

Tensor ppool(const Tensor& block, int parts) {
  if (parts <= 0) throw std::invalid_argument("ppool: P must be positive");
  if (block.rank() != 4) throw ShapeError("ppool: expected [I x C x H x W]");
  if (static_cast<std::size_t>(parts) > block.dim(2)) {
    throw std::invalid_argument("ppool: P=" + std::to_string(parts) + " exceeds height " +
                                std::to_string(block.dim(2)));
  }
  return ops::band_pool(block, static_cast<std::size_t>(parts));
}

const TokenMatrix& PartitionedPyramid::block(int b) const {
  if (b == static_cast<int>(intermediate.size()) + 1) return last;
  if (b < 1 || b > static_cast<int>(intermediate.size())) {
    throw std::out_of_range("partitioned pyramid: no block " + std::to_string(b));
  }
  return intermediate[static_cast<std::size_t>(b - 1)];
}

std::string adapter_param_name(int block) {
  return "adapter.block" + std::to_string(block) + ".w";
}

void init_adapter_params(const EncoderConfig& enc, int width, ParamStore& params,
                         CounterRng& rng) {
  for (int b = 0; b < enc.num_blocks(); ++b) {
    params.add(adapter_param_name(b + 1),
               init::glorot(static_cast<std::size_t>(enc.channels[b]),
                            static_cast<std::size_t>(width), rng));
  }
}

PartitionedPyramid stack_partitions(const FeaturePyramid& pyramid, int parts,
                                    const ParamStore& params, const std::vector<int>& needed) {
  const int levels = static_cast<int>(pyramid.blocks.size());
  if (levels < 1) throw std::invalid_argument("stack_partitions: empty pyramid");
  for (int b = 0; b < levels; ++b) {
    if (static_cast<int>(pyramid.blocks[b].dim(2)) < parts) {
      throw std::invalid_argument("stack_partitions: block " + std::to_string(b + 1) +
                                  " height " + std::to_string(pyramid.blocks[b].dim(2)) +
                                  " is below P=" + std::to_string(parts));
    }
  }
  const int frames = static_cast<int>(pyramid.blocks[0].dim(0));
  PartitionedPyramid out;
  out.intermediate.resize(static_cast<std::size_t>(levels - 1));
  for (int b = 1; b <= levels; ++b) {
    const bool want = needed.empty() || b == levels ||
                      std::find(needed.begin(), needed.end(), b) != needed.end();
    if (!want) continue;
    Tensor pooled = ppool(pyramid.blocks[static_cast<std::size_t>(b - 1)], parts);
    Tensor adapted = ops::matmul(pooled, params.get(adapter_param_name(b)));
    auto m = TokenMatrix::make(std::move(adapted), frames, parts);
    if (b == levels) {
      out.last = std::move(m);
    } else {
      out.intermediate[static_cast<std::size_t>(b - 1)] = std::move(m);
    }
  }
  return out;
}

}  // namespace denseil
