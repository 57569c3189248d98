#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "denseil/rng.hpp"
#include "denseil/tensor.hpp"

namespace denseil {

struct Tracklet {
  Tensor frames;  // [T_full x C x H x W], values in [0, 1]
  int identity = 0;
  int camera = 0;
  int tracklet_id = 0;

  std::size_t length() const { return frames.dim(0); }
};

enum class Split { Train, Query, Gallery };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct Dataset {
  std::vector<Tracklet> train;
  std::vector<Tracklet> query;
  std::vector<Tracklet> gallery;
};

/// Synthetic video-identity corpus.
///
/// Identities come in confusable pairs (2k, 2k+1) that share the same four
/// body bands (colours A, B, A, B) and the same glyph; the pair differs only
/// in whether the glyph sits on the first or the third band, so the two
/// look identical to any position-blind pooled descriptor. Each tracklet
/// adds a camera colour gain, a brightness offset and static pixel noise;
/// each frame adds vertical jitter and, with occlusion_prob, a gray bar
/// covering 25-50% of the height.
///
/// Tracklet k of an identity is seen by camera (identity + k) % cameras.
/// Tracklets 0..T-3 are training data, T-2 is the query and T-1 the gallery
/// entry, so query and gallery are always on different cameras.
struct SynthConfig {
  int num_identities = 16;
  int tracklets_per_identity = 4;
  int cameras = 3;
  int frames_per_tracklet = 32;
  int channels = 3;
  int height = 32;
  int width = 16;
  double occlusion_prob = 0.3;
  int jitter = 2;
  /// 0 keeps pair palettes apart; 1 washes every colour to gray.
  double distractor_similarity = 0.0;
  double noise = 0.02;
  std::uint64_t seed = 7;

  void validate() const;
};

Dataset generate_dataset(const SynthConfig& cfg);
Tracklet render_tracklet(const SynthConfig& cfg, int identity, int index);

/// Frame indices drawn one per chunk; chunks are contiguous and
/// equal-as-possible (leftover frames go to the earliest chunks).
std::vector<std::size_t> restricted_sample_indices(std::size_t length, int chunks,
                                                   CounterRng& rng);
Tensor restricted_sample(const Tracklet& tracklet, int chunks, CounterRng& rng);

/// Identity-balanced batches: K distinct identities with T tracklets each.
/// An epoch walks a fresh shuffle of all identities in groups of K, so every
/// identity appears at least once; the last group is topped up with other
/// identities. Identities with fewer than T tracklets are sampled with
/// replacement.
class PkSampler {
 public:
  PkSampler(const std::vector<Tracklet>& tracklets, int ids_per_batch, int tracklets_per_id,
            std::uint64_t seed);

  /// Each batch lists indices into the tracklet vector, grouped by identity.
  std::vector<std::vector<std::size_t>> next_epoch();
  int batch_size() const { return ids_per_batch_ * tracklets_per_id_; }

 private:
  std::vector<int> identities_;
  std::vector<std::vector<std::size_t>> members_;
  int ids_per_batch_;
  int tracklets_per_id_;
  CounterRng rng_;
};

// Tracklet file: "DILT", u32 identity, camera, tracklet_id, T_full, C, H, W,
// then T_full*C*H*W little-endian f32 values.
void write_tracklet(const std::filesystem::path& path, const Tracklet& t);
Tracklet read_tracklet(const std::filesystem::path& path);

// Corpus directory: one tracklet file per clip plus manifest.csv with
// header "filename,identity,camera,split".
void save_corpus(const std::filesystem::path& dir, const Dataset& data);
Dataset load_corpus(const std::filesystem::path& dir);

}  // namespace denseil
