#include "denseil/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "denseil/checkpoint.hpp"
#include "denseil/ops.hpp"

namespace denseil {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "gallery") return Split::Gallery;
  throw std::invalid_argument("unknown split '" + s + "'");
}

void SynthConfig::validate() const {
  if (num_identities < 1) throw std::invalid_argument("synth: need at least one identity");
  if (tracklets_per_identity < 3) {
    throw std::invalid_argument(
        "synth: impossible split sizes, need >= 3 tracklets per identity (train, query, "
        "gallery)");
  }
  if (cameras < 2) {
    throw std::invalid_argument(
        "synth: impossible split sizes, query and gallery need two distinct cameras");
  }
  if (frames_per_tracklet < 1) throw std::invalid_argument("synth: frames_per_tracklet < 1");
  if (channels < 1) throw std::invalid_argument("synth: channels < 1");
  if (height < 8 || width < 6) throw std::invalid_argument("synth: image must be >= 8x6");
  if (occlusion_prob < 0.0 || occlusion_prob > 1.0) {
    throw std::invalid_argument("synth: occlusion_prob outside [0, 1]");
  }
  if (jitter < 0 || jitter >= height / 2) throw std::invalid_argument("synth: bad jitter");
  if (distractor_similarity < 0.0 || distractor_similarity > 1.0) {
    throw std::invalid_argument("synth: distractor_similarity outside [0, 1]");
  }
  if (noise < 0.0) throw std::invalid_argument("synth: noise < 0");
}

namespace {

constexpr double kBackground = 0.35;
constexpr double kOccluder = 0.5;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// HSV to one channel of RGB; channels beyond 3 reuse the hue cyclically.
double hsv_channel(double h, double s, double v, int ch) {
  const double hue = std::fmod(h + static_cast<double>(ch) / 3.0, 1.0);
  const double x = std::fabs(hue * 6.0 - 3.0) - 1.0;
  const double base = std::clamp(x, 0.0, 1.0);
  return v * (1.0 - s + s * base);
}

struct Palette {
  std::vector<double> a, b;
};

Palette identity_palette(const SynthConfig& cfg, int identity) {
  const int pairs = (cfg.num_identities + 1) / 2;
  const int pair = identity / 2;
  const double hue_a = static_cast<double>(pair) / static_cast<double>(pairs);
  const double hue_b = std::fmod(hue_a + 0.5 + 0.5 / static_cast<double>(pairs), 1.0);
  Palette p;
  const double s = cfg.distractor_similarity;
  for (int ch = 0; ch < cfg.channels; ++ch) {
    const double ca = hsv_channel(hue_a, 0.8, 0.9, ch);
    const double cb = hsv_channel(hue_b, 0.8, 0.6, ch);
    p.a.push_back((1.0 - s) * ca + s * 0.5);
    p.b.push_back((1.0 - s) * cb + s * 0.5);
  }
  return p;
}

double camera_gain(int camera, int ch) {
  return 1.0 + 0.12 * std::sin(1.7 * camera + 2.3 * ch + 0.4);
}

// Base appearance [C x H x W] before per-frame nuisances.
std::vector<double> render_identity(const SynthConfig& cfg, int identity) {
  const auto H = static_cast<std::size_t>(cfg.height);
  const auto W = static_cast<std::size_t>(cfg.width);
  const auto C = static_cast<std::size_t>(cfg.channels);
  const auto bands = ops::band_heights(H, 4);
  const Palette pal = identity_palette(cfg, identity);
  std::vector<double> img(C * H * W, kBackground);

  const std::size_t left = W / 8, right = W - W / 8;
  std::size_t row = 0;
  for (std::size_t band = 0; band < 4; ++band) {
    const auto& colour = band % 2 == 0 ? pal.a : pal.b;
    for (std::size_t y = row; y < row + bands[band]; ++y) {
      for (std::size_t x = left; x < right; ++x) {
        for (std::size_t c = 0; c < C; ++c) img[(c * H + y) * W + x] = colour[c];
      }
    }
    row += bands[band];
  }

  // Glyph: a light square with a dark core, on band 0 or band 2.
  const std::size_t band = identity % 2 == 0 ? 0 : 2;
  std::size_t top = 0;
  for (std::size_t b = 0; b < band; ++b) top += bands[b];
  const std::size_t gh = std::max<std::size_t>(2, bands[band] / 2);
  const std::size_t gw = std::max<std::size_t>(2, W / 4);
  const std::size_t gy = top + (bands[band] - gh) / 2;
  const std::size_t gx = (W - gw) / 2;
  for (std::size_t y = gy; y < gy + gh; ++y) {
    for (std::size_t x = gx; x < gx + gw; ++x) {
      const bool core = y >= gy + gh / 4 && y < gy + gh - gh / 4 && x >= gx + gw / 4 &&
                        x < gx + gw - gw / 4;
      for (std::size_t c = 0; c < C; ++c) img[(c * H + y) * W + x] = core ? 0.05 : 0.95;
    }
  }
  return img;
}

}  // namespace

Tracklet render_tracklet(const SynthConfig& cfg, int identity, int index) {
  const auto H = static_cast<std::size_t>(cfg.height);
  const auto W = static_cast<std::size_t>(cfg.width);
  const auto C = static_cast<std::size_t>(cfg.channels);
  const auto T = static_cast<std::size_t>(cfg.frames_per_tracklet);
  const int tid = identity * cfg.tracklets_per_identity + index;
  const int camera = (identity + index) % cfg.cameras;
  CounterRng rng = CounterRng(cfg.seed).substream(static_cast<std::uint64_t>(tid));

  std::vector<double> base = render_identity(cfg, identity);
  const double brightness = rng.uniform(-0.05, 0.05);
  for (std::size_t c = 0; c < C; ++c) {
    const double gain = camera_gain(camera, static_cast<int>(c));
    for (std::size_t i = 0; i < H * W; ++i) {
      double& v = base[c * H * W + i];
      v = v * gain + brightness + cfg.noise * rng.normal();
    }
  }

  std::vector<double> out(T * C * H * W);
  const std::size_t frame_size = C * H * W;
  for (std::size_t t = 0; t < T; ++t) {
    const int dy = cfg.jitter == 0
                       ? 0
                       : static_cast<int>(rng.below(static_cast<std::size_t>(2 * cfg.jitter + 1))) -
                             cfg.jitter;
    bool occluded = false;
    std::size_t occ_top = 0, occ_h = 0;
    if (cfg.occlusion_prob > 0.0 && rng.uniform() < cfg.occlusion_prob) {
      occluded = true;
      const std::size_t lo = (H + 3) / 4, hi = H / 2;
      occ_h = lo + rng.below(hi - lo + 1);
      occ_top = rng.below(H - occ_h + 1);
    }
    double* frame = out.data() + t * frame_size;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        const long src = static_cast<long>(y) - dy;
        for (std::size_t x = 0; x < W; ++x) {
          double v = src >= 0 && src < static_cast<long>(H)
                         ? base[(c * H + static_cast<std::size_t>(src)) * W + x]
                         : kBackground;
          if (occluded && y >= occ_top && y < occ_top + occ_h) v = kOccluder;
          frame[(c * H + y) * W + x] = round_f32(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }

  Tracklet tr;
  tr.frames = Tensor::from_values({T, C, H, W}, std::move(out));
  tr.identity = identity;
  tr.camera = camera;
  tr.tracklet_id = tid;
  return tr;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const int per = cfg.tracklets_per_identity;
  const std::size_t total = static_cast<std::size_t>(cfg.num_identities) * static_cast<std::size_t>(per);
  std::vector<Tracklet> all(total);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(total); ++i) {
    const int id = static_cast<int>(i) / per, k = static_cast<int>(i) % per;
    all[static_cast<std::size_t>(i)] = render_tracklet(cfg, id, k);
  }
  Dataset d;
  for (std::size_t i = 0; i < total; ++i) {
    const int k = static_cast<int>(i) % per;
    if (k == per - 2) {
      d.query.push_back(std::move(all[i]));
    } else if (k == per - 1) {
      d.gallery.push_back(std::move(all[i]));
    } else {
      d.train.push_back(std::move(all[i]));
    }
  }
  return d;
}

std::vector<std::size_t> restricted_sample_indices(std::size_t length, int chunks,
                                                   CounterRng& rng) {
  if (chunks < 1) throw std::invalid_argument("restricted_sample: chunks must be >= 1");
  if (length < static_cast<std::size_t>(chunks)) {
    throw std::invalid_argument("restricted_sample: tracklet has " + std::to_string(length) +
                                " frames, fewer than " + std::to_string(chunks) + " chunks");
  }
  const auto sizes = ops::band_heights(length, static_cast<std::size_t>(chunks));
  std::vector<std::size_t> idx;
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    idx.push_back(start + rng.below(s));
    start += s;
  }
  return idx;
}

Tensor restricted_sample(const Tracklet& tracklet, int chunks, CounterRng& rng) {
  const auto idx = restricted_sample_indices(tracklet.length(), chunks, rng);
  const auto& s = tracklet.frames.shape();
  const std::size_t frame = s[1] * s[2] * s[3];
  auto src = tracklet.frames.values();
  std::vector<double> out(idx.size() * frame);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + static_cast<long>(idx[i] * frame), frame,
                out.begin() + static_cast<long>(i * frame));
  }
  return Tensor::from_values({idx.size(), s[1], s[2], s[3]}, std::move(out));
}

PkSampler::PkSampler(const std::vector<Tracklet>& tracklets, int ids_per_batch,
                     int tracklets_per_id, std::uint64_t seed)
    : ids_per_batch_(ids_per_batch), tracklets_per_id_(tracklets_per_id), rng_(seed) {
  if (ids_per_batch < 1 || tracklets_per_id < 1) {
    throw std::invalid_argument("pk sampler: K and T must be >= 1");
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < tracklets.size(); ++i) groups[tracklets[i].identity].push_back(i);
  for (auto& [id, members] : groups) {
    identities_.push_back(id);
    members_.push_back(members);
  }
  if (static_cast<std::size_t>(ids_per_batch) > identities_.size()) {
    throw std::invalid_argument("pk sampler: " + std::to_string(ids_per_batch) +
                                " identities per batch but only " +
                                std::to_string(identities_.size()) + " available");
  }
}

namespace {

template <class T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<std::vector<std::size_t>> PkSampler::next_epoch() {
  const std::size_t n = identities_.size(), k = static_cast<std::size_t>(ids_per_batch_);
  const auto t = static_cast<std::size_t>(tracklets_per_id_);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng_);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += k) {
    std::vector<std::size_t> group(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(std::min(n, start + k)));
    if (group.size() < k) {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < start; ++i) rest.push_back(order[i]);
      shuffle(rest, rng_);
      for (std::size_t i = 0; group.size() < k; ++i) group.push_back(rest[i]);
    }
    std::vector<std::size_t> batch;
    for (std::size_t g : group) {
      std::vector<std::size_t> pool = members_[g];
      shuffle(pool, rng_);
      for (std::size_t j = 0; j < t; ++j) {
        batch.push_back(j < pool.size() ? pool[j] : pool[rng_.below(pool.size())]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void write_tracklet(const std::filesystem::path& path, const Tracklet& t) {
  if (t.frames.rank() != 4) throw ShapeError("write_tracklet: frames must be [T x C x H x W]");
  std::vector<char> bytes{'D', 'I', 'L', 'T'};
  le::put_u32(bytes, static_cast<std::uint32_t>(t.identity));
  le::put_u32(bytes, static_cast<std::uint32_t>(t.camera));
  le::put_u32(bytes, static_cast<std::uint32_t>(t.tracklet_id));
  for (std::size_t d : t.frames.shape()) le::put_u32(bytes, static_cast<std::uint32_t>(d));
  for (double v : t.frames.values()) le::put_f32(bytes, static_cast<float>(v));
  write_file(path, bytes);
}

Tracklet read_tracklet(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  constexpr std::size_t header = 4 + 7 * 4;
  if (bytes.size() < header || std::string(bytes.data(), 4) != "DILT") {
    throw IoError(path.string() + ": not a tracklet file");
  }
  const char* p = bytes.data() + 4;
  Tracklet t;
  t.identity = static_cast<int>(le::get_u32(p));
  t.camera = static_cast<int>(le::get_u32(p + 4));
  t.tracklet_id = static_cast<int>(le::get_u32(p + 8));
  Shape shape;
  std::size_t count = 1;
  for (int i = 0; i < 4; ++i) {
    shape.push_back(le::get_u32(p + 12 + 4 * i));
    count *= shape.back();
  }
  if (bytes.size() != header + 4 * count) {
    throw IoError(path.string() + ": truncated or oversized tracklet payload");
  }
  std::vector<double> values(count);
  const char* data = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i) values[i] = le::get_f32(data + 4 * i);
  t.frames = Tensor::from_values(shape, std::move(values));
  return t;
}

void save_corpus(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "filename,identity,camera,split\n";
  auto emit = [&](const std::vector<Tracklet>& items, Split split) {
    for (const auto& t : items) {
      char name[64];
      std::snprintf(name, sizeof name, "tracklet_%05d.dilt", t.tracklet_id);
      write_tracklet(dir / name, t);
      manifest << name << "," << t.identity << "," << t.camera << "," << to_string(split)
               << "\n";
    }
  };
  emit(data.train, Split::Train);
  emit(data.query, Split::Query);
  emit(data.gallery, Split::Gallery);
  if (!manifest) throw IoError("failed writing manifest in " + dir.string());
}

Dataset load_corpus(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.csv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("corpus missing: cannot open " + manifest_path.string());
  std::string line;
  std::getline(manifest, line);
  if (line != "filename,identity,camera,split") {
    throw IoError(manifest_path.string() + ": unexpected header");
  }
  Dataset d;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, id, cam, split;
    if (!std::getline(ss, name, ',') || !std::getline(ss, id, ',') ||
        !std::getline(ss, cam, ',') || !std::getline(ss, split)) {
      throw IoError(manifest_path.string() + ": malformed row '" + line + "'");
    }
    Tracklet t = read_tracklet(dir / name);
    if (t.identity != std::stoi(id) || t.camera != std::stoi(cam)) {
      throw IoError(name + ": header disagrees with manifest");
    }
    switch (parse_split(split)) {
      case Split::Train: d.train.push_back(std::move(t)); break;
      case Split::Query: d.query.push_back(std::move(t)); break;
      case Split::Gallery: d.gallery.push_back(std::move(t)); break;
    }
  }
  return d;
}

}  // namespace denseil
