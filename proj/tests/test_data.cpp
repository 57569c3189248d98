#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <tuple>
#include <unistd.h>

#include "denseil/checkpoint.hpp"
#include "denseil/data.hpp"
#include "denseil/encoder.hpp"
#include "denseil/losses.hpp"
#include "denseil/partition.hpp"

using namespace denseil;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny() {
  SynthConfig cfg;
  cfg.num_identities = 4;
  cfg.frames_per_tracklet = 8;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("denseil_data_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

bool same_tracklet(const Tracklet& a, const Tracklet& b) {
  return a.identity == b.identity && a.camera == b.camera && a.tracklet_id == b.tracklet_id &&
         a.frames.shape() == b.frames.shape() &&
         std::equal(a.frames.values().begin(), a.frames.values().end(), b.frames.values().begin());
}

bool same_split(const std::vector<Tracklet>& a, const std::vector<Tracklet>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_tracklet(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("generation is deterministic and seed dependent") {
  const auto cfg = tiny();
  const auto a = generate_dataset(cfg), b = generate_dataset(cfg);
  CHECK(same_split(a.train, b.train));
  CHECK(same_split(a.query, b.query));
  CHECK(same_split(a.gallery, b.gallery));
  auto other = cfg;
  other.seed = 8;
  CHECK_FALSE(same_split(generate_dataset(other).train, a.train));
}

TEST_CASE("pixels lie in [0,1] and are single-precision exact") {
  const auto data = generate_dataset(tiny());
  for (const auto* split : {&data.train, &data.query, &data.gallery}) {
    for (const auto& t : *split) {
      CHECK(t.frames.shape() == Shape{8, 3, 32, 16});
      for (double v : t.frames.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        REQUIRE(static_cast<double>(static_cast<float>(v)) == v);
      }
    }
  }
}

TEST_CASE("split layout") {
  const auto cfg = tiny();
  const auto data = generate_dataset(cfg);
  CHECK(data.train.size() == 8);
  CHECK(data.query.size() == 4);
  CHECK(data.gallery.size() == 4);
  std::set<std::tuple<int, int, int>> query;
  for (const auto& q : data.query) query.insert({q.identity, q.camera, q.tracklet_id});
  for (std::size_t i = 0; i < data.query.size(); ++i) {
    const auto& q = data.query[i];
    const auto& g = data.gallery[i];
    CHECK(q.identity == g.identity);
    CHECK(q.camera != g.camera);
    CHECK(query.count({g.identity, g.camera, g.tracklet_id}) == 0);
    CHECK(q.camera == (q.identity + 2) % 3);
  }
  std::set<int> ids;
  for (const auto& t : data.train) ids.insert(t.identity);
  CHECK(ids.size() == 4);
}

TEST_CASE("static tracklets without occlusion or jitter") {
  auto cfg = tiny();
  cfg.occlusion_prob = 0.0;
  cfg.jitter = 0;
  const auto t = render_tracklet(cfg, 3, 1);
  const std::size_t frame = 3 * 32 * 16;
  for (std::size_t f = 1; f < t.length(); ++f) {
    CHECK(std::equal(t.frames.values().begin(), t.frames.values().begin() + frame,
                     t.frames.values().begin() + static_cast<long>(f * frame)));
  }
}

TEST_CASE("config errors") {
  auto cfg = tiny();
  cfg.tracklets_per_identity = 2;
  CHECK_THROWS(cfg.validate());
  cfg = tiny();
  cfg.cameras = 1;
  CHECK_THROWS(cfg.validate());
  cfg = tiny();
  cfg.occlusion_prob = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg = tiny();
  cfg.jitter = 16;
  CHECK_THROWS(cfg.validate());
  CHECK(parse_split(to_string(Split::Gallery)) == Split::Gallery);
  CHECK_THROWS(parse_split("test"));
}

TEST_CASE("restricted sampling picks one frame per chunk") {
  CounterRng rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto idx = restricted_sample_indices(16, 8, rng);
    REQUIRE(idx.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(idx[k] >= 2 * k);
      CHECK(idx[k] <= 2 * k + 1);
    }
  }
  for (std::size_t len = 1; len <= 20; ++len) {
    for (int chunks = 1; chunks <= static_cast<int>(len); ++chunks) {
      const auto idx = restricted_sample_indices(len, chunks, rng);
      std::size_t start = 0;
      const std::size_t base = len / chunks, extra = len % chunks;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::size_t size = base + (k < extra ? 1 : 0);
        CHECK(idx[k] >= start);
        CHECK(idx[k] < start + size);
        if (k > 0) CHECK(idx[k] > idx[k - 1]);
        start += size;
      }
    }
  }
}

TEST_CASE("restricted sampling edge cases") {
  CounterRng rng(2);
  const auto all = restricted_sample_indices(8, 8, rng);
  for (std::size_t k = 0; k < 8; ++k) CHECK(all[k] == k);
  std::set<std::size_t> seen;
  for (int t = 0; t < 400; ++t) seen.insert(restricted_sample_indices(10, 1, rng).front());
  CHECK(seen.size() == 10);
  CHECK(*seen.rbegin() == 9);
  CHECK_THROWS(restricted_sample_indices(4, 5, rng));
  CHECK_THROWS(restricted_sample_indices(4, 0, rng));

  const auto t = render_tracklet(tiny(), 0, 0);
  CounterRng a(3), b(3);
  const auto idx = restricted_sample_indices(8, 4, a);
  const Tensor clip = restricted_sample(t, 4, b);
  CHECK(clip.shape() == Shape{4, 3, 32, 16});
  const std::size_t frame = 3 * 32 * 16;
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::equal(clip.values().begin() + static_cast<long>(k * frame),
                     clip.values().begin() + static_cast<long>((k + 1) * frame),
                     t.frames.values().begin() + static_cast<long>(idx[k] * frame)));
  }
}

TEST_CASE("pk batches have K identities with T tracklets each") {
  const auto data = generate_dataset(tiny());
  PkSampler sampler(data.train, 3, 2, 5);
  CHECK(sampler.batch_size() == 6);
  for (int epoch = 0; epoch < 5; ++epoch) {
    std::set<int> covered;
    for (const auto& batch : sampler.next_epoch()) {
      REQUIRE(batch.size() == 6);
      std::map<int, int> count;
      for (std::size_t i : batch) ++count[data.train[i].identity];
      CHECK(count.size() == 3);
      for (auto [id, c] : count) {
        CHECK(c == 2);
        covered.insert(id);
      }
    }
    CHECK(covered.size() == 4);
  }
}

TEST_CASE("pk sampler is deterministic and validates K") {
  const auto data = generate_dataset(tiny());
  PkSampler a(data.train, 2, 2, 9), b(data.train, 2, 2, 9);
  for (int e = 0; e < 3; ++e) CHECK(a.next_epoch() == b.next_epoch());
  CHECK_THROWS(PkSampler(data.train, 5, 2, 1));
  CHECK_THROWS(PkSampler(data.train, 0, 2, 1));
}

TEST_CASE("pk sampler samples with replacement for short identities") {
  const auto data = generate_dataset(tiny());
  PkSampler sampler(data.train, 2, 4, 3);
  for (const auto& batch : sampler.next_epoch()) CHECK(batch.size() == 8);
}

TEST_CASE("single identity batches reach the triplet loss error") {
  auto cfg = tiny();
  cfg.num_identities = 1;
  const auto data = generate_dataset(cfg);
  PkSampler sampler(data.train, 1, 2, 1);
  const auto batches = sampler.next_epoch();
  REQUIRE(batches.size() == 1);
  std::vector<int> labels;
  for (std::size_t i : batches[0]) labels.push_back(data.train[i].identity);
  CHECK_THROWS(batch_hard_triplet(Tensor::zeros({labels.size(), 2}), labels, 0.3));
}

TEST_CASE("tracklet and corpus files round trip") {
  const auto data = generate_dataset(tiny());
  const auto dir = scratch("corpus");
  save_corpus(dir, data);
  const auto back = load_corpus(dir);
  CHECK(same_split(back.train, data.train));
  CHECK(same_split(back.query, data.query));
  CHECK(same_split(back.gallery, data.gallery));

  const auto a = dir / "a.dilt", b = dir / "b.dilt";
  write_tracklet(a, data.query[0]);
  write_tracklet(b, read_tracklet(a));
  CHECK(read_file(a) == read_file(b));
  auto bytes = read_file(a);
  bytes.resize(bytes.size() - 4);
  write_file(b, bytes);
  CHECK_THROWS_AS(read_tracklet(b), IoError);
  fs::remove(dir / "manifest.csv");
  CHECK_THROWS_AS(load_corpus(dir), IoError);
  fs::remove_all(dir);
}

TEST_CASE("confusable pairs separate with more parts under a fixed random encoder") {
  auto cfg = tiny();
  cfg.occlusion_prob = 0.0;
  cfg.jitter = 0;
  // Identity 0 tracklet 1 and identity 1 tracklet 0 share camera 1.
  const Tracklet a = render_tracklet(cfg, 0, 1), b = render_tracklet(cfg, 1, 0);
  REQUIRE(a.camera == b.camera);
  EncoderConfig enc;
  for (std::uint64_t seed : {4, 5, 6, 7, 8}) {
    ParamStore params;
    CounterRng rng(seed);
    init_encoder_params(enc, params, rng);
    encode_clip(a.frames, enc, params, Mode::Train);
    auto relative_distance = [&](int parts) {
      NoGradGuard guard;
      const Tensor za = ppool(encode_clip(a.frames, enc, params, Mode::Eval).blocks.back(), parts);
      const Tensor zb = ppool(encode_clip(b.frames, enc, params, Mode::Eval).blocks.back(), parts);
      double diff = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < za.numel(); ++i) {
        diff += (za.values()[i] - zb.values()[i]) * (za.values()[i] - zb.values()[i]);
        na += za.values()[i] * za.values()[i];
        nb += zb.values()[i] * zb.values()[i];
      }
      return std::sqrt(diff) / (0.5 * (std::sqrt(na) + std::sqrt(nb)));
    };
    const double global = relative_distance(1), parted = relative_distance(4);
    MESSAGE("seed " << seed << ": relative pair distance P=1 " << global << ", P=4 " << parted);
    CHECK(global < parted);
  }
}

}  // TEST_SUITE
