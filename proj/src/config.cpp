#include "denseil/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "denseil/checkpoint.hpp"

namespace denseil {

double OptimConfig::lr_at(int epoch) const {
  return lr / std::pow(decay_factor, std::floor(static_cast<double>(epoch) / decay_interval));
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": expected an unsigned integer");
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_int(key, trim(item))));
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  ConfigKey doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define DIL_INT(key, member, help)                                                         \
  Field {                                                                                  \
    {key, help}, [](const RunConfig& c) { return std::to_string(c.member); },             \
        [](RunConfig& c, const std::string& v) {                                           \
          c.member = static_cast<decltype(c.member)>(parse_int(key, v));                   \
        }                                                                                  \
  }
#define DIL_U64(key, member, help)                                                         \
  Field {                                                                                  \
    {key, help}, [](const RunConfig& c) { return std::to_string(c.member); },             \
        [](RunConfig& c, const std::string& v) { c.member = parse_u64(key, v); }           \
  }
#define DIL_DBL(key, member, help)                                                         \
  Field {                                                                                  \
    {key, help}, [](const RunConfig& c) { return fmt_double(c.member); },                 \
        [](RunConfig& c, const std::string& v) { c.member = parse_double(key, v); }        \
  }
#define DIL_BOOL(key, member, help)                                                        \
  Field {                                                                                  \
    {key, help}, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); }          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DIL_U64("seed", seed, "master seed for initialisation and batch sampling"),
      DIL_U64("eval.seed", eval_seed, "seed of the fixed per-tracklet evaluation sample"),
      DIL_INT("data.num_identities", data.num_identities, "identities in the synthetic corpus"),
      DIL_INT("data.tracklets_per_identity", data.tracklets_per_identity,
              "tracklets per identity; the last two are query and gallery"),
      DIL_INT("data.cameras", data.cameras, "number of cameras (>= 2)"),
      DIL_INT("data.frames_per_tracklet", data.frames_per_tracklet, "frames per tracklet"),
      DIL_INT("data.channels", data.channels, "image channels"),
      DIL_INT("data.height", data.height, "image height"),
      DIL_INT("data.width", data.width, "image width"),
      DIL_DBL("data.occlusion_prob", data.occlusion_prob, "probability a frame is occluded"),
      DIL_INT("data.jitter", data.jitter, "max vertical jitter in pixels"),
      DIL_DBL("data.distractor_similarity", data.distractor_similarity,
              "0 = distinct palettes, 1 = all gray"),
      DIL_DBL("data.noise", data.noise, "std of static per-tracklet pixel noise"),
      DIL_U64("data.seed", data.seed, "corpus seed"),
      Field{{"encoder.channels", "comma-separated channel widths, one per block"},
            [](const RunConfig& c) { return join(c.encoder.channels); },
            [](RunConfig& c, const std::string& v) {
              c.encoder.channels = parse_int_list("encoder.channels", v);
            }},
      DIL_BOOL("encoder.downsample_last", encoder.downsample_last,
               "halve resolution in the last block too"),
      DIL_DBL("encoder.norm_eps", encoder.norm_eps, "channel norm epsilon"),
      DIL_DBL("encoder.norm_momentum", encoder.norm_momentum, "running statistics momentum"),
      DIL_INT("decoder.blocks", decoder.blocks, "number of decoder blocks R (0 = baseline)"),
      DIL_INT("decoder.width", decoder.width, "token width d"),
      DIL_INT("decoder.heads", decoder.heads, "attention heads (must divide width)"),
      DIL_INT("decoder.ffn_hidden", decoder.ffn_hidden, "FFN hidden width"),
      Field{{"decoder.variant", "trans_enc | trans_dec | dense_il"},
            [](const RunConfig& c) { return to_string(c.decoder.variant); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.decoder.variant = parse_variant(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("decoder.variant: ") + e.what());
              }
            }},
      Field{{"decoder.fusion", "attention | summation | concatenation"},
            [](const RunConfig& c) { return to_string(c.decoder.fusion); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.decoder.fusion = parse_fusion(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("decoder.fusion: ") + e.what());
              }
            }},
      Field{{"decoder.dense_sources",
             "comma-separated 1-based encoder blocks for dense keys; empty = 2..L"},
            [](const RunConfig& c) { return join(c.decoder.dense_sources); },
            [](RunConfig& c, const std::string& v) {
              c.decoder.dense_sources = parse_int_list("decoder.dense_sources", v);
            }},
      Field{{"decoder.pos_emb", "none | spatial | temporal | step"},
            [](const RunConfig& c) { return to_string(c.decoder.pos_emb); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.decoder.pos_emb = parse_pos_emb(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("decoder.pos_emb: ") + e.what());
              }
            }},
      DIL_BOOL("decoder.pos_per_block", decoder.pos_per_block,
               "add positions before every block instead of once"),
      DIL_BOOL("decoder.ffn_before_dense", decoder.ffn_before_dense,
               "run the FFN sub-layer before the dense sub-layer"),
      DIL_BOOL("decoder.final_ln", decoder.final_ln, "layer norm after the last block"),
      DIL_DBL("decoder.ln_eps", decoder.ln_eps, "layer norm epsilon"),
      DIL_INT("partition.parts", parts, "horizontal parts P per frame"),
      DIL_DBL("loss.margin", loss.margin, "batch-hard triplet margin"),
      DIL_DBL("loss.ce_weight", loss.ce_weight, "cross-entropy weight"),
      DIL_DBL("loss.triplet_weight", loss.triplet_weight, "triplet weight (0 disables)"),
      DIL_DBL("optim.lr", optim.lr, "initial learning rate"),
      DIL_DBL("optim.beta1", optim.beta1, "Adam beta1"),
      DIL_DBL("optim.beta2", optim.beta2, "Adam beta2"),
      DIL_DBL("optim.eps", optim.eps, "Adam epsilon"),
      DIL_DBL("optim.decay_factor", optim.decay_factor, "learning rate divisor per interval"),
      DIL_INT("optim.decay_interval", optim.decay_interval, "epochs between decays"),
      DIL_INT("train.epochs", train.epochs, "training epochs"),
      DIL_INT("train.ids_per_batch", train.ids_per_batch, "identities per batch K"),
      DIL_INT("train.tracklets_per_id", train.tracklets_per_id, "tracklets per identity T"),
      DIL_INT("train.passes_per_epoch", train.passes_per_epoch,
              "shuffled passes over all identities per epoch"),
      DIL_INT("train.chunks", train.chunks, "frames per clip I (restricted sampling chunks)"),
      DIL_INT("train.checkpoint_interval", train.checkpoint_interval,
              "epochs between intermediate checkpoints; 0 = final only"),
  };
  return table;
}

#undef DIL_INT
#undef DIL_U64
#undef DIL_DBL
#undef DIL_BOOL

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.doc.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.doc);
    return out;
  }();
  return schema;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  find_field(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

void RunConfig::validate() const {
  try {
    data.validate();
    encoder.validate();
    decoder.validate(encoder.num_blocks());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (encoder.in_channels != data.channels || encoder.height != data.height ||
      encoder.width != data.width) {
    throw ConfigError("encoder input does not match data image dims");
  }
  const auto dims = encoder.block_dims();
  for (std::size_t b = 0; b < dims.size(); ++b) {
    if (parts < 1 || parts > dims[b].first) {
      throw ConfigError("partition.parts=" + std::to_string(parts) + " exceeds block " +
                        std::to_string(b + 1) + " height " + std::to_string(dims[b].first));
    }
  }
  if (loss.margin < 0.0) throw ConfigError("loss.margin must be >= 0");
  if (loss.ce_weight < 0.0 || loss.triplet_weight < 0.0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (optim.lr < 0.0) throw ConfigError("optim.lr must be >= 0");
  if (optim.beta1 < 0.0 || optim.beta1 >= 1.0 || optim.beta2 < 0.0 || optim.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (optim.eps <= 0.0) throw ConfigError("optim.eps must be > 0");
  if (optim.decay_factor <= 0.0) throw ConfigError("optim.decay_factor must be > 0");
  if (optim.decay_interval < 1) throw ConfigError("optim.decay_interval must be >= 1");
  if (train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (train.ids_per_batch < 1 || train.tracklets_per_id < 1) {
    throw ConfigError("train.ids_per_batch and train.tracklets_per_id must be >= 1");
  }
  if (train.passes_per_epoch < 1) throw ConfigError("train.passes_per_epoch must be >= 1");
  if (train.chunks < 1 || train.chunks > data.frames_per_tracklet) {
    throw ConfigError("train.chunks must lie in [1, frames_per_tracklet]");
  }
  if (train.checkpoint_interval < 0) throw ConfigError("train.checkpoint_interval must be >= 0");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.doc.key + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.encoder.in_channels = cfg.data.channels;
  cfg.encoder.height = cfg.data.height;
  cfg.encoder.width = cfg.data.width;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_text();
}

}  // namespace denseil
