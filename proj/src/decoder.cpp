#include "denseil/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "denseil/encoder.hpp"
#include "denseil/init.hpp"
#include "denseil/ops.hpp"

namespace denseil {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::TransEnc: return "trans_enc";
    case Variant::TransDec: return "trans_dec";
    case Variant::DenseIL: return "dense_il";
  }
  return "?";
}

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::Attention: return "attention";
    case Fusion::Summation: return "summation";
    case Fusion::Concatenation: return "concatenation";
  }
  return "?";
}

std::string to_string(PosEmbMode m) {
  switch (m) {
    case PosEmbMode::None: return "none";
    case PosEmbMode::Spatial: return "spatial";
    case PosEmbMode::Temporal: return "temporal";
    case PosEmbMode::Step: return "step";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "trans_enc") return Variant::TransEnc;
  if (s == "trans_dec") return Variant::TransDec;
  if (s == "dense_il") return Variant::DenseIL;
  throw std::invalid_argument("unknown variant '" + s + "' (trans_enc|trans_dec|dense_il)");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "attention") return Fusion::Attention;
  if (s == "summation") return Fusion::Summation;
  if (s == "concatenation") return Fusion::Concatenation;
  throw std::invalid_argument("unknown fusion '" + s +
                              "' (attention|summation|concatenation)");
}

PosEmbMode parse_pos_emb(const std::string& s) {
  if (s == "none") return PosEmbMode::None;
  if (s == "spatial") return PosEmbMode::Spatial;
  if (s == "temporal") return PosEmbMode::Temporal;
  if (s == "step") return PosEmbMode::Step;
  throw std::invalid_argument("unknown pos_emb '" + s + "' (none|spatial|temporal|step)");
}

std::vector<int> DecoderConfig::sources_for(int encoder_blocks) const {
  switch (variant) {
    case Variant::TransEnc: return {};
    case Variant::TransDec: return {encoder_blocks};
    case Variant::DenseIL: break;
  }
  std::vector<int> s = dense_sources;
  if (s.empty()) {
    for (int b = 2; b <= encoder_blocks; ++b) s.push_back(b);
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

void DecoderConfig::validate(int encoder_blocks) const {
  if (blocks < 0) throw std::invalid_argument("decoder: R must be >= 0");
  if (width < 2) throw std::invalid_argument("decoder: width must be >= 2");
  if (heads < 1 || width % heads != 0) {
    throw std::invalid_argument("decoder: width " + std::to_string(width) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (ffn_hidden < 1) throw std::invalid_argument("decoder: ffn_hidden must be positive");
  for (int b : dense_sources) {
    if (b < 1 || b > encoder_blocks) {
      throw std::invalid_argument("decoder: dense source Z^" + std::to_string(b) +
                                  " outside 1.." + std::to_string(encoder_blocks));
    }
  }
  if (variant == Variant::DenseIL && sources_for(encoder_blocks).empty()) {
    throw std::invalid_argument("decoder: dense_il needs at least one dense source");
  }
}

namespace {

void check_square(const Tensor& h, const char* op) {
  if (h.rank() != 2 || h.dim(0) == 0) {
    throw ShapeError(std::string(op) + ": expected [n x d] with n >= 1");
  }
}

}  // namespace

Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in,
                            const AttentionParams& p, int heads, AttentionMap* record) {
  const std::size_t d = query_in.dim(1);
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0) {
    throw std::invalid_argument("attention: width " + std::to_string(d) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (kv_in.dim(1) != d) throw ShapeError("attention: key/value width mismatch");
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = ops::matmul(query_in, p.wq);
  Tensor k = ops::matmul(kv_in, p.wk);
  Tensor v = ops::matmul(kv_in, p.wv);
  if (record != nullptr) {
    record->heads = heads;
    record->queries = query_in.dim(0);
    record->keys = kv_in.dim(0);
    record->weights.clear();
    record->weights.reserve(static_cast<std::size_t>(heads) * record->queries * record->keys);
  }
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    const std::size_t off = static_cast<std::size_t>(hd) * dh;
    Tensor qh = heads == 1 ? q : ops::slice_cols(q, off, dh);
    Tensor kh = heads == 1 ? k : ops::slice_cols(k, off, dh);
    Tensor vh = heads == 1 ? v : ops::slice_cols(v, off, dh);
    Tensor weights = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), scale));
    if (record != nullptr) {
      record->weights.insert(record->weights.end(), weights.values().begin(),
                             weights.values().end());
    }
    outs.push_back(ops::matmul(weights, vh));
  }
  Tensor joined = heads == 1 ? outs[0] : ops::concat_cols(outs);
  return ops::matmul(joined, p.wo);
}

Tensor self_attention_block(const Tensor& h, const AttentionParams& p, int heads, double eps,
                            AttentionMap* record) {
  check_square(h, "self_attention_block");
  Tensor x = ops::layer_norm(h, p.ln_gamma, p.ln_beta, eps);
  if (record != nullptr) record->key_source.assign(h.dim(0), 0);
  return ops::add(h, multi_head_attention(x, x, p, heads, record));
}

Tensor dense_attention(const Tensor& h, std::span<const Tensor> sources, const DenseParams& p,
                       Fusion fusion, int heads, double eps, AttentionMap* record) {
  check_square(h, "dense_attention");
  for (const auto& s : sources) {
    if (s.rank() != 2 || s.dim(1) != h.dim(1)) {
      throw ShapeError("dense_attention: source width mismatch");
    }
    if (s.dim(0) != h.dim(0)) throw ShapeError("dense_attention: source row mismatch");
  }
  if (fusion == Fusion::Summation) {
    Tensor out = h;
    for (const auto& s : sources) out = ops::add(out, s);
    return out;
  }
  Tensor x = ops::layer_norm(h, p.attn.ln_gamma, p.attn.ln_beta, eps);
  if (fusion == Fusion::Concatenation) {
    std::vector<Tensor> cols(sources.begin(), sources.end());
    cols.push_back(x);
    return ops::add(h, ops::matmul(ops::concat_cols(cols), p.w_cat));
  }
  std::vector<Tensor> rows(sources.begin(), sources.end());
  rows.push_back(x);
  Tensor kv = rows.size() == 1 ? x : ops::concat_rows(rows);
  return ops::add(h, multi_head_attention(x, kv, p.attn, heads, record));
}

Tensor ffn_block(const Tensor& h, const FfnParams& p, double eps) {
  check_square(h, "ffn_block");
  Tensor x = ops::layer_norm(h, p.ln_gamma, p.ln_beta, eps);
  return ops::add(h, ops::ffn(x, p.w1, p.b1, p.w2, p.b2));
}

std::string decoder_block_prefix(int block) {
  return "decoder.block" + std::to_string(block) + ".";
}

namespace {

void add_ln(const std::string& prefix, std::size_t d, ParamStore& params) {
  params.add(prefix + "ln.gamma", Tensor::full({d}, 1.0));
  params.add(prefix + "ln.beta", Tensor::zeros({d}));
}

void add_attention(const std::string& prefix, std::size_t d, ParamStore& params,
                   CounterRng& rng) {
  add_ln(prefix, d, params);
  for (const char* w : {"wq", "wk", "wv", "wo"}) params.add(prefix + w, init::glorot(d, d, rng));
}

AttentionParams attention_view(const ParamStore& params, const std::string& prefix) {
  return {params.get(prefix + "ln.gamma"), params.get(prefix + "ln.beta"),
          params.get(prefix + "wq"),       params.get(prefix + "wk"),
          params.get(prefix + "wv"),       params.get(prefix + "wo")};
}

}  // namespace

void init_decoder_params(const DecoderConfig& cfg, int encoder_blocks, ParamStore& params,
                         CounterRng& rng) {
  cfg.validate(encoder_blocks);
  const auto d = static_cast<std::size_t>(cfg.width);
  const auto hidden = static_cast<std::size_t>(cfg.ffn_hidden);
  const auto sources = cfg.sources_for(encoder_blocks).size();
  for (int r = 1; r <= cfg.blocks; ++r) {
    const auto prefix = decoder_block_prefix(r);
    add_attention(prefix + "self.", d, params, rng);
    if (cfg.has_dense()) {
      if (cfg.fusion == Fusion::Attention) {
        add_attention(prefix + "dense.", d, params, rng);
      } else if (cfg.fusion == Fusion::Concatenation) {
        add_ln(prefix + "dense.", d, params);
        params.add(prefix + "dense.w_cat", init::glorot((sources + 1) * d, d, rng));
      }
    }
    add_ln(prefix + "ffn.", d, params);
    params.add(prefix + "ffn.w1", init::glorot(d, hidden, rng));
    params.add(prefix + "ffn.b1", Tensor::zeros({hidden}));
    params.add(prefix + "ffn.w2", init::glorot(hidden, d, rng));
    params.add(prefix + "ffn.b2", Tensor::zeros({d}));
  }
  if (cfg.final_ln && cfg.blocks > 0) add_ln("decoder.final.", d, params);
}

BlockParams block_params(const ParamStore& params, const DecoderConfig& cfg, int block) {
  const auto prefix = decoder_block_prefix(block);
  BlockParams bp;
  bp.self = attention_view(params, prefix + "self.");
  if (cfg.has_dense()) {
    if (cfg.fusion == Fusion::Attention) {
      bp.dense.attn = attention_view(params, prefix + "dense.");
    } else if (cfg.fusion == Fusion::Concatenation) {
      bp.dense.attn.ln_gamma = params.get(prefix + "dense.ln.gamma");
      bp.dense.attn.ln_beta = params.get(prefix + "dense.ln.beta");
      bp.dense.w_cat = params.get(prefix + "dense.w_cat");
    }
  }
  bp.ffn = {params.get(prefix + "ffn.ln.gamma"), params.get(prefix + "ffn.ln.beta"),
            params.get(prefix + "ffn.w1"),       params.get(prefix + "ffn.b1"),
            params.get(prefix + "ffn.w2"),       params.get(prefix + "ffn.b2")};
  return bp;
}

std::vector<SourceTokens> gather_sources(const PartitionedPyramid& pyramid,
                                         const DecoderConfig& cfg, int encoder_blocks) {
  std::vector<SourceTokens> out;
  for (int b : cfg.sources_for(encoder_blocks)) out.push_back({b, pyramid.block(b)});
  return out;
}

Tensor position_matrix(const StepEmbTable& table, PosEmbMode mode) {
  if (mode == PosEmbMode::Step) return table.combined;
  const auto frames = static_cast<std::size_t>(table.frames);
  const auto parts = static_cast<std::size_t>(table.parts);
  const auto d = static_cast<std::size_t>(table.width);
  std::vector<double> v(frames * parts * d, 0.0);
  auto s = table.spatial.values();
  auto t = table.temporal.values();
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t p = 0; p < parts; ++p) {
      for (std::size_t j = 0; j < d; ++j) {
        double& dst = v[(i * parts + p) * d + j];
        if (mode == PosEmbMode::Spatial) dst = s[p * d + j];
        if (mode == PosEmbMode::Temporal) dst = t[i * d + j];
      }
    }
  }
  return Tensor::from_values({frames * parts, d}, std::move(v));
}

Tensor decoder_forward(const TokenMatrix& tokens, std::span<const SourceTokens> sources,
                       const StepEmbTable* emb, const DecoderConfig& cfg,
                       const ParamStore& params, DecoderState* state) {
  const std::size_t n = tokens.rows();
  const auto d = static_cast<std::size_t>(cfg.width);
  if (tokens.tokens.dim(0) != n || tokens.tokens.dim(1) != d) {
    throw ShapeError("decoder_forward: tokens " + shape_str(tokens.tokens.shape()) +
                     " do not match I*P x d");
  }
  if (cfg.variant == Variant::DenseIL && cfg.blocks > 0 && sources.empty()) {
    throw std::invalid_argument("decoder_forward: dense_il needs dense sources");
  }
  std::vector<Tensor> source_tensors;
  std::vector<int> key_labels;
  if (cfg.has_dense()) {
    for (const auto& s : sources) {
      if (s.tokens.tokens.dim(0) != n || s.tokens.tokens.dim(1) != d) {
        throw ShapeError("decoder_forward: source Z^" + std::to_string(s.block) +
                         " has shape " + shape_str(s.tokens.tokens.shape()));
      }
      source_tensors.push_back(s.tokens.tokens);
      key_labels.insert(key_labels.end(), n, s.block);
    }
    key_labels.insert(key_labels.end(), n, 0);
  }

  Tensor positions;
  if (emb != nullptr && cfg.pos_emb != PosEmbMode::None) {
    if (static_cast<std::size_t>(emb->frames) * emb->parts != n ||
        emb->width != cfg.width) {
      throw ShapeError("decoder_forward: positional table does not match tokens");
    }
    positions = position_matrix(*emb, cfg.pos_emb);
  }

  Tensor h = tokens.tokens;
  if (positions.defined() && !cfg.pos_per_block) h = ops::add(h, positions);

  for (int r = 1; r <= cfg.blocks; ++r) {
    if (positions.defined() && cfg.pos_per_block) h = ops::add(h, positions);
    const BlockParams bp = block_params(params, cfg, r);

    AttentionMap self_map, dense_map;
    self_map.block = dense_map.block = r;
    h = self_attention_block(h, bp.self, cfg.heads, cfg.ln_eps, state ? &self_map : nullptr);

    auto dense_step = [&] {
      if (!cfg.has_dense()) return;
      AttentionMap* rec = (state && cfg.fusion == Fusion::Attention) ? &dense_map : nullptr;
      h = dense_attention(h, source_tensors, bp.dense, cfg.fusion, cfg.heads, cfg.ln_eps, rec);
      if (rec != nullptr) dense_map.key_source = key_labels;
    };
    if (cfg.ffn_before_dense) {
      h = ffn_block(h, bp.ffn, cfg.ln_eps);
      dense_step();
    } else {
      dense_step();
      h = ffn_block(h, bp.ffn, cfg.ln_eps);
    }
    if (state != nullptr) {
      state->hidden.push_back(h);
      state->self_attention.push_back(std::move(self_map));
      if (!dense_map.weights.empty()) state->dense_attention.push_back(std::move(dense_map));
    }
  }
  if (cfg.final_ln && cfg.blocks > 0) {
    h = ops::layer_norm(h, params.get("decoder.final.ln.gamma"),
                        params.get("decoder.final.ln.beta"), cfg.ln_eps);
  }
  return ops::mean_rows(h);
}

void init_head_params(int width, int num_classes, ParamStore& params, CounterRng& rng) {
  if (num_classes < 1) throw std::invalid_argument("head: need at least one class");
  const auto d = static_cast<std::size_t>(width);
  add_running_norm_params("head.bn.", d, params);
  params.add("head.classifier.w",
             init::normal({d, static_cast<std::size_t>(num_classes)}, 0.01, rng));
}

HeadOutput classify_head(const Tensor& embeddings, ParamStore& params, Mode mode, double eps,
                         double momentum) {
  Tensor x = embeddings;
  if (x.rank() == 1) x = ops::reshape(x, {1, x.dim(0)});
  if (x.rank() != 2) throw ShapeError("classify_head: expected [d] or [B x d]");
  HeadOutput out;
  out.bn_embedding = running_norm(x, "head.bn.", params, mode, eps, momentum);
  out.logits = ops::matmul(out.bn_embedding, params.get("head.classifier.w"));
  return out;
}

FlopEstimate estimate_decoder_flops(const DecoderConfig& cfg, int frames, int parts,
                                    std::span<const int> block_channels) {
  if (block_channels.empty()) {
    throw std::invalid_argument("estimate_decoder_flops: encoder channels required");
  }
  const int levels = static_cast<int>(block_channels.size());
  const std::uint64_t n = static_cast<std::uint64_t>(frames) * parts;
  const auto d = static_cast<std::uint64_t>(cfg.width);
  const auto h = static_cast<std::uint64_t>(cfg.ffn_hidden);
  const auto sources = cfg.sources_for(levels);
  const std::uint64_t s = sources.size();
  const std::uint64_t m = (s + 1) * n;

  FlopEstimate est;
  std::uint64_t block = 4 * n * d * d + 2 * n * n * d + 2 * n * d * h;
  if (cfg.has_dense()) {
    switch (cfg.fusion) {
      case Fusion::Attention: block += 2 * n * d * d + 2 * m * d * d + 2 * n * m * d; break;
      case Fusion::Concatenation: block += (s + 1) * n * d * d; break;
      case Fusion::Summation: break;
    }
  }
  est.per_block = block;
  est.blocks = static_cast<std::uint64_t>(cfg.blocks) * block;

  std::vector<int> adapted{levels};
  if (cfg.blocks > 0 && cfg.has_dense()) {
    for (int b : sources) {
      if (b != levels) adapted.push_back(b);
    }
  }
  for (int b : adapted) {
    est.adapters += n * static_cast<std::uint64_t>(block_channels[b - 1]) * d;
  }
  return est;
}

}  // namespace denseil
