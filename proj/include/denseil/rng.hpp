#pragma once

#include <cstddef>
#include <cstdint>

namespace denseil {

/// Counter-based generator built on the SplitMix64 finaliser.
///
/// Output k of a stream with key K is mix64(K + k * 0x9E3779B97F4A7C15),
/// k = 1, 2, ... where mix64 is the SplitMix64 output function
///   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB;
///   z ^= z >> 31.
/// Sub-streams use key derive(K, id) = mix64(K ^ mix64(id + 0x9E3779B97F4A7C15)).
/// uniform() = (u64 >> 11) * 2^-53; below(n) = floor(uniform() * n);
/// normal() is Box-Muller on (1 - uniform(), uniform()) taking the cosine
/// branch only. Every draw is therefore reproducible from (key, counter).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix64(std::uint64_t z);
  static std::uint64_t derive(std::uint64_t key, std::uint64_t stream);

  CounterRng substream(std::uint64_t stream) const { return CounterRng(derive(key_, stream)); }

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace denseil
