#include "denseil/posemb.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace denseil {

namespace {

Tensor sinusoid_table(int positions, int width, const char* what) {
  if (width < 2) throw std::invalid_argument(std::string(what) + ": width must be >= 2");
  if (positions < 1) throw std::invalid_argument(std::string(what) + ": need >= 1 position");
  const auto n = static_cast<std::size_t>(positions);
  const auto d = static_cast<std::size_t>(width);
  std::vector<double> v(n * d);
  for (std::size_t q = 1; q <= n; ++q) {
    for (std::size_t j = 1; j <= d; ++j) {
      const double angle = static_cast<double>(q) /
                           std::pow(10000.0, static_cast<double>(j) / static_cast<double>(d));
      v[(q - 1) * d + (j - 1)] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_values({n, d}, std::move(v));
}

}  // namespace

Tensor spatial_pos(int parts, int width) { return sinusoid_table(parts, width, "spatial_pos"); }

Tensor temporal_pos(int frames, int width) {
  return sinusoid_table(frames, width, "temporal_pos");
}

std::shared_ptr<const StepEmbTable> step_emb(int frames, int parts, int width) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::shared_ptr<const StepEmbTable>> cache;
  const auto key = std::make_tuple(frames, parts, width);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto table = std::make_shared<StepEmbTable>();
  table->frames = frames;
  table->parts = parts;
  table->width = width;
  table->spatial = spatial_pos(parts, width);
  table->temporal = temporal_pos(frames, width);
  const auto d = static_cast<std::size_t>(width);
  std::vector<double> v(static_cast<std::size_t>(frames) * parts * d);
  auto s = table->spatial.values();
  auto t = table->temporal.values();
  for (std::size_t i = 0; i < static_cast<std::size_t>(frames); ++i) {
    for (std::size_t p = 0; p < static_cast<std::size_t>(parts); ++p) {
      for (std::size_t j = 0; j < d; ++j) {
        v[(i * parts + p) * d + j] = s[p * d + j] + t[i * d + j];
      }
    }
  }
  table->combined =
      Tensor::from_values({static_cast<std::size_t>(frames) * parts, d}, std::move(v));
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(table)).first->second;
}

}  // namespace denseil
