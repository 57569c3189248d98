#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "denseil/data.hpp"
#include "denseil/decoder.hpp"
#include "denseil/encoder.hpp"

namespace denseil {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LossConfig {
  double margin = 0.3;
  double ce_weight = 1.0;
  double triplet_weight = 1.0;
};

/// Adam with a step schedule: lr(epoch) = lr / decay_factor^floor(epoch / decay_interval).
struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 10.0;
  int decay_interval = 20;

  double lr_at(int epoch) const;
};

struct TrainConfig {
  int epochs = 60;
  int ids_per_batch = 4;
  int tracklets_per_id = 2;
  /// Shuffled passes over all identities per epoch.
  int passes_per_epoch = 4;
  int chunks = 8;
  /// Write checkpoint_epoch<N>.dil every N epochs; 0 disables.
  int checkpoint_interval = 0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 2024;
  SynthConfig data;
  EncoderConfig encoder;
  DecoderConfig decoder;
  int parts = 4;
  LossConfig loss;
  OptimConfig optim;
  TrainConfig train;

  void validate() const;

  /// "key = value" lines for every key, in schema order.
  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Sets one dotted key from its text form; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
};

struct ConfigKey {
  std::string key;
  std::string help;
};
/// Documented schema, in the order used by to_text().
const std::vector<ConfigKey>& config_schema();

}  // namespace denseil
