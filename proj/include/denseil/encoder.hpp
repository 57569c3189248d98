#pragma once

#include <string>
#include <vector>

#include "denseil/rng.hpp"
#include "denseil/tensor.hpp"

namespace denseil {

/// Multi-block convolutional encoder. Every block is
///   conv3x3(stride) -> channel norm -> ReLU -> conv3x3 -> channel norm -> ReLU
/// where the first conv of a block halves the resolution, except in the
/// last block when downsample_last is false.
struct EncoderConfig {
  std::vector<int> channels{16, 32, 64, 128};
  bool downsample_last = false;
  int in_channels = 3;
  int height = 32;
  int width = 16;
  double norm_eps = 1e-5;
  double norm_momentum = 0.1;

  int num_blocks() const { return static_cast<int>(channels.size()); }
  bool downsamples(int block) const;  // 0-based block index
  int downsample_count() const;
  /// (H_l, W_l) of every block output for an input of height x width.
  std::vector<std::pair<int, int>> block_dims() const;
  void validate() const;
};

/// Outputs of all L blocks, block l shaped [I x C_l x H_l x W_l].
struct FeaturePyramid {
  std::vector<Tensor> blocks;
};

std::string encoder_param_prefix(int block);  // 1-based block

void init_encoder_params(const EncoderConfig& cfg, ParamStore& params, CounterRng& rng);

/// Encodes frames [I x C x H x W]. Train mode normalises with the statistics
/// of this clip and folds them into the running averages; eval mode uses the
/// running averages and fails if none were ever recorded.
FeaturePyramid encode_clip(const Tensor& frames, const EncoderConfig& cfg,
                           ParamStore& params, Mode mode);

/// Channel norm shared by the encoder and the classifier head. `prefix`
/// names gamma/beta plus the running_mean/running_var/tracked buffers.
Tensor running_norm(const Tensor& x, const std::string& prefix, ParamStore& params,
                    Mode mode, double eps, double momentum);

void add_running_norm_params(const std::string& prefix, std::size_t channels,
                             ParamStore& params);

}  // namespace denseil
