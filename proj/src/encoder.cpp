#include "denseil/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "denseil/init.hpp"
#include "denseil/ops.hpp"
#include "denseil/stats_error.hpp"

namespace denseil {

bool EncoderConfig::downsamples(int block) const {
  return block < num_blocks() - 1 || downsample_last;
}

int EncoderConfig::downsample_count() const {
  int n = 0;
  for (int b = 0; b < num_blocks(); ++b) n += downsamples(b) ? 1 : 0;
  return n;
}

std::vector<std::pair<int, int>> EncoderConfig::block_dims() const {
  std::vector<std::pair<int, int>> dims;
  int h = height, w = width;
  for (int b = 0; b < num_blocks(); ++b) {
    if (downsamples(b)) {
      h /= 2;
      w /= 2;
    }
    dims.emplace_back(h, w);
  }
  return dims;
}

void EncoderConfig::validate() const {
  if (num_blocks() < 2) {
    throw std::invalid_argument("encoder: at least two blocks are required");
  }
  for (int b = 0; b < num_blocks(); ++b) {
    if (channels[b] <= 0) throw std::invalid_argument("encoder: channels must be positive");
    if (b > 0 && channels[b] <= channels[b - 1]) {
      throw std::invalid_argument("encoder: channels must be strictly increasing");
    }
  }
  if (in_channels <= 0 || height <= 0 || width <= 0) {
    throw std::invalid_argument("encoder: input dimensions must be positive");
  }
  const int factor = 1 << downsample_count();
  if (height % factor != 0 || width % factor != 0) {
    throw std::invalid_argument("encoder: input " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by " +
                                std::to_string(factor));
  }
}

std::string encoder_param_prefix(int block) {
  return "encoder.block" + std::to_string(block) + ".";
}

void add_running_norm_params(const std::string& prefix, std::size_t channels,
                             ParamStore& params) {
  params.add(prefix + "gamma", Tensor::full({channels}, 1.0));
  params.add(prefix + "beta", Tensor::zeros({channels}));
  params.add(prefix + "running_mean", Tensor::zeros({channels}), false);
  params.add(prefix + "running_var", Tensor::full({channels}, 1.0), false);
  params.add(prefix + "tracked", Tensor::zeros({1}), false);
}

void init_encoder_params(const EncoderConfig& cfg, ParamStore& params, CounterRng& rng) {
  cfg.validate();
  std::size_t in = static_cast<std::size_t>(cfg.in_channels);
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    const auto out = static_cast<std::size_t>(cfg.channels[b]);
    const auto prefix = encoder_param_prefix(b + 1);
    for (int conv = 1; conv <= 2; ++conv) {
      const std::size_t cin = conv == 1 ? in : out;
      const double stddev = std::sqrt(2.0 / static_cast<double>(cin * 9));
      const auto name = prefix + "conv" + std::to_string(conv) + ".";
      params.add(name + "w", init::normal({cin, 3, 3, out}, stddev, rng));
      params.add(name + "b", Tensor::zeros({out}));
      add_running_norm_params(prefix + "norm" + std::to_string(conv) + ".", out, params);
    }
    in = out;
  }
}

Tensor running_norm(const Tensor& x, const std::string& prefix, ParamStore& params,
                    Mode mode, double eps, double momentum) {
  const Tensor& gamma = params.get(prefix + "gamma");
  const Tensor& beta = params.get(prefix + "beta");
  Tensor& rmean = params.get(prefix + "running_mean");
  Tensor& rvar = params.get(prefix + "running_var");
  Tensor& tracked = params.get(prefix + "tracked");
  if (mode == Mode::Eval) {
    if (tracked.item() <= 0.0) {
      throw MissingStatisticsError(prefix + ": running statistics were never recorded");
    }
    ops::NormStats fixed{{rmean.values().begin(), rmean.values().end()},
                         {rvar.values().begin(), rvar.values().end()}};
    return ops::batch_norm(x, gamma, beta, eps, &fixed);
  }
  ops::NormStats batch;
  Tensor y = ops::batch_norm(x, gamma, beta, eps, nullptr, &batch);
  auto m = rmean.mutable_values();
  auto v = rvar.mutable_values();
  const bool first = tracked.item() <= 0.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    m[c] = first ? batch.mean[c] : (1.0 - momentum) * m[c] + momentum * batch.mean[c];
    v[c] = first ? batch.var[c] : (1.0 - momentum) * v[c] + momentum * batch.var[c];
  }
  tracked.mutable_values()[0] += 1.0;
  return y;
}

FeaturePyramid encode_clip(const Tensor& frames, const EncoderConfig& cfg,
                           ParamStore& params, Mode mode) {
  if (frames.rank() != 4) {
    throw ShapeError("encode_clip: frames must be [I x C x H x W], got " +
                     shape_str(frames.shape()));
  }
  if (frames.dim(1) != static_cast<std::size_t>(cfg.in_channels)) {
    throw ShapeError("encode_clip: channel count mismatch");
  }
  const std::size_t factor = std::size_t{1} << cfg.downsample_count();
  if (frames.dim(2) % factor != 0 || frames.dim(3) % factor != 0) {
    throw ShapeError("encode_clip: spatial size " + shape_str(frames.shape()) +
                     " not divisible by " + std::to_string(factor));
  }
  FeaturePyramid pyramid;
  Tensor x = frames;
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    const auto prefix = encoder_param_prefix(b + 1);
    for (int conv = 1; conv <= 2; ++conv) {
      const auto name = prefix + "conv" + std::to_string(conv) + ".";
      const std::size_t stride = (conv == 1 && cfg.downsamples(b)) ? 2 : 1;
      x = ops::conv2d(x, params.get(name + "w"), params.get(name + "b"), stride);
      x = running_norm(x, prefix + "norm" + std::to_string(conv) + ".", params, mode,
                       cfg.norm_eps, cfg.norm_momentum);
      x = ops::relu(x);
    }
    pyramid.blocks.push_back(x);
  }
  return pyramid;
}

}  // namespace denseil
