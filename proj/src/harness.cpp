#include "denseil/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <stdexcept>

#include "denseil/checkpoint.hpp"
#include "denseil/encoder.hpp"
#include "denseil/losses.hpp"
#include "denseil/ops.hpp"
#include "denseil/partition.hpp"
#include "denseil/posemb.hpp"

namespace denseil {

namespace {

enum Stream : std::uint64_t {
  kEncoderInit = 1,
  kAdapterInit = 2,
  kDecoderInit = 3,
  kHeadInit = 4,
  kBatches = 10,
  kClips = 11,
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

Model::Model(const RunConfig& cfg, int num_classes) : cfg_(cfg), num_classes_(num_classes) {
  cfg_.validate();
  const CounterRng root(cfg_.seed);
  CounterRng enc_rng = root.substream(kEncoderInit);
  CounterRng ada_rng = root.substream(kAdapterInit);
  CounterRng dec_rng = root.substream(kDecoderInit);
  CounterRng head_rng = root.substream(kHeadInit);
  const int levels = cfg_.encoder.num_blocks();
  init_encoder_params(cfg_.encoder, params_, enc_rng);
  init_adapter_params(cfg_.encoder, cfg_.decoder.width, params_, ada_rng);
  init_decoder_params(cfg_.decoder, levels, params_, dec_rng);
  init_head_params(cfg_.decoder.width, num_classes, params_, head_rng);

  needed_blocks_ = {levels};
  if (cfg_.decoder.blocks > 0) {
    for (int b : cfg_.decoder.sources_for(levels)) needed_blocks_.push_back(b);
  }
}

Tensor Model::embed(const Tensor& clip, Mode mode, DecoderState* state) {
  const int levels = cfg_.encoder.num_blocks();
  const auto pyramid = encode_clip(clip, cfg_.encoder, params_, mode);
  const auto parts = stack_partitions(pyramid, cfg_.parts, params_, needed_blocks_);
  std::vector<SourceTokens> sources;
  std::shared_ptr<const StepEmbTable> emb;
  if (cfg_.decoder.blocks > 0) {
    sources = gather_sources(parts, cfg_.decoder, levels);
    if (cfg_.decoder.pos_emb != PosEmbMode::None) {
      emb = step_emb(parts.last.frames, parts.last.parts, cfg_.decoder.width);
    }
  }
  return decoder_forward(parts.last, sources, emb.get(), cfg_.decoder, params_, state);
}

HeadOutput Model::head(const Tensor& embeddings, Mode mode) {
  return classify_head(embeddings, params_, mode, cfg_.encoder.norm_eps,
                       cfg_.encoder.norm_momentum);
}

FlopEstimate Model::flops() const {
  return estimate_decoder_flops(cfg_.decoder, cfg_.train.chunks, cfg_.parts,
                                cfg_.encoder.channels);
}

Model load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  const auto records = read_checkpoint(checkpoint);
  int classes = -1;
  for (const auto& r : records) {
    if (r.name == "head.classifier.w" && r.extents.size() == 2) {
      classes = static_cast<int>(r.extents[1]);
    }
  }
  if (classes < 1) throw IoError(checkpoint.string() + ": no classifier weights");
  Model model(cfg, classes);
  load_checkpoint(checkpoint, model.params());
  return model;
}

std::string RunReport::epochs_csv() const {
  std::string out = "epoch,lr,ce,triplet,total\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + fmt(e.lr) + "," + fmt(e.ce) + "," + fmt(e.triplet) +
           "," + fmt(e.total) + "\n";
  }
  return out;
}

std::string RunReport::summary_json() const {
  std::string out = "{\n  \"epochs\": " + std::to_string(epochs.size()) + ",\n";
  if (!epochs.empty()) out += "  \"final_loss\": " + fmt(epochs.back().total) + ",\n";
  out += "  \"metrics\": {\"mAP\": " + fmt(metrics.map) + ", \"R-1\": " + fmt(metrics.r1) +
         ", \"R-5\": " + fmt(metrics.r5) + ", \"R-10\": " + fmt(metrics.r10) +
         ", \"R-20\": " + fmt(metrics.r20) +
         ", \"valid_queries\": " + std::to_string(metrics.valid_queries) +
         ", \"excluded_queries\": " + std::to_string(metrics.excluded_queries) + "},\n";
  out += "  \"decoder_macs\": {\"per_block\": " + std::to_string(flops.per_block) +
         ", \"blocks\": " + std::to_string(flops.blocks) +
         ", \"adapters\": " + std::to_string(flops.adapters) +
         ", \"total\": " + std::to_string(flops.total()) + "}\n}\n";
  return out;
}

std::map<int, int> label_map(const std::vector<Tracklet>& tracklets) {
  std::set<int> ids;
  for (const auto& t : tracklets) ids.insert(t.identity);
  std::map<int, int> out;
  for (int id : ids) out.emplace(id, static_cast<int>(out.size()));
  return out;
}

namespace {

struct Adam {
  std::vector<std::vector<double>> m, v;
  long step = 0;

  void update(ParamStore& params, const OptimConfig& o, double lr) {
    auto trainable = params.params();
    if (m.empty()) {
      m.resize(trainable.size());
      v.resize(trainable.size());
    }
    ++step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      auto& p = trainable[i];
      if (!p.trainable) continue;
      auto g = p.tensor.grad();
      if (g.empty()) continue;
      auto w = p.tensor.mutable_values();
      if (m[i].empty()) {
        m[i].assign(w.size(), 0.0);
        v[i].assign(w.size(), 0.0);
      }
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[i][k] = o.beta1 * m[i][k] + (1.0 - o.beta1) * g[k];
        v[i][k] = o.beta2 * v[i][k] + (1.0 - o.beta2) * g[k] * g[k];
        const double mhat = m[i][k] / c1;
        const double vhat = v[i][k] / c2;
        w[k] -= lr * mhat / (std::sqrt(vhat) + o.eps);
      }
    }
  }
};

}  // namespace

Tensor eval_clip(const Tracklet& t, const RunConfig& cfg) {
  CounterRng rng = CounterRng(cfg.eval_seed).substream(static_cast<std::uint64_t>(t.tracklet_id));
  return restricted_sample(t, cfg.train.chunks, rng);
}

Tensor embed_tracklets(Model& model, const std::vector<Tracklet>& tracklets) {
  const auto d = static_cast<std::size_t>(model.config().decoder.width);
  const std::size_t n = tracklets.size();
  std::vector<Tensor> raw(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      NoGradGuard guard;
      const auto& t = tracklets[static_cast<std::size_t>(i)];
      raw[static_cast<std::size_t>(i)] = model.embed(eval_clip(t, model.config()), Mode::Eval);
    } catch (...) {
#pragma omp critical(denseil_embed_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  if (n == 0) return Tensor::zeros({0, d});
  NoGradGuard guard;
  return model.head(ops::stack_rows(raw), Mode::Eval).bn_embedding;
}

RankMetrics evaluate(Model& model, const Dataset& data, const EvalOptions& opts) {
  const auto& gallery = opts.self_match ? data.query : data.gallery;
  if (data.query.empty() || gallery.empty()) {
    throw std::invalid_argument("evaluate: query or gallery split is empty");
  }
  const Tensor q = embed_tracklets(model, data.query);
  const Tensor g = opts.self_match ? q : embed_tracklets(model, gallery);
  EvalTable table;
  for (const auto& t : data.query) {
    table.query_ids.push_back(t.identity);
    table.query_cams.push_back(t.camera);
  }
  for (const auto& t : gallery) {
    table.gallery_ids.push_back(t.identity);
    table.gallery_cams.push_back(t.camera);
  }
  table.distances = pairwise_distances(q, g);
  table.filter_same_camera = !opts.self_match;
  return evaluate_table(table);
}

TrainResult train_run(const RunConfig& cfg, const Dataset& data,
                      const std::optional<std::filesystem::path>& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train_run: training split is empty");
  const auto labels = label_map(data.train);
  TrainResult result{RunReport{}, Model(cfg, static_cast<int>(labels.size()))};
  Model& model = result.model;
  RunReport& report = result.report;
  report.flops = model.flops();

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    cfg.save(*out_dir / "config.txt");
  }

  const CounterRng root(cfg.seed);
  PkSampler sampler(data.train, cfg.train.ids_per_batch, cfg.train.tracklets_per_id,
                    root.substream(kBatches).key());
  CounterRng clip_rng = root.substream(kClips);
  Adam adam;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const double lr = cfg.optim.lr_at(epoch);
    std::vector<std::vector<std::size_t>> batches;
    for (int pass = 0; pass < cfg.train.passes_per_epoch; ++pass) {
      for (auto& b : sampler.next_epoch()) batches.push_back(std::move(b));
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (std::size_t step = 0; step < batches.size(); ++step) {
      try {
        std::vector<Tensor> embs;
        std::vector<int> ys;
        for (std::size_t idx : batches[step]) {
          const auto& t = data.train[idx];
          embs.push_back(
              model.embed(restricted_sample(t, cfg.train.chunks, clip_rng), Mode::Train));
          ys.push_back(labels.at(t.identity));
        }
        const Tensor e = ops::stack_rows(embs);
        const HeadOutput out = model.head(e, Mode::Train);
        const Tensor ce = cross_entropy(out.logits, ys);
        Tensor loss = ops::scale(ce, cfg.loss.ce_weight);
        double tri_value = 0.0;
        if (cfg.loss.triplet_weight > 0.0) {
          const Tensor tri = batch_hard_triplet(e, ys, cfg.loss.margin);
          tri_value = tri.item();
          loss = ops::add(loss, ops::scale(tri, cfg.loss.triplet_weight));
        }
        if (!std::isfinite(loss.item())) throw NumericError("loss is not finite");
        model.params().zero_grad();
        backward(loss);
        adam.update(model.params(), cfg.optim, lr);
        log.ce += ce.item();
        log.triplet += tri_value;
        log.total += loss.item();
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                           ": " + e.what());
      }
    }
    const double nb = static_cast<double>(std::max<std::size_t>(1, batches.size()));
    log.ce /= nb;
    log.triplet /= nb;
    log.total /= nb;
    report.epochs.push_back(log);
    if (out_dir && cfg.train.checkpoint_interval > 0 &&
        (epoch + 1) % cfg.train.checkpoint_interval == 0) {
      save_checkpoint(*out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".dil"),
                      model.params());
    }
  }

  if (!data.query.empty() && !data.gallery.empty()) report.metrics = evaluate(model, data);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (out_dir) {
    save_checkpoint(*out_dir / "checkpoint.dil", model.params());
    write_text(*out_dir / "report.csv", report.epochs_csv());
    write_text(*out_dir / "summary.json", report.summary_json());
    write_metrics_csv(*out_dir / "metrics.csv", report.metrics);
    write_text(*out_dir / "timing.json",
               "{\"wall_seconds\": " + fmt(report.wall_seconds) + "}\n");
  }
  return result;
}

AblationAxis parse_axis(const std::string& s) {
  if (s == "fusion") return AblationAxis::Fusion;
  if (s == "variant") return AblationAxis::Variant;
  if (s == "dense_sources") return AblationAxis::DenseSources;
  if (s == "R") return AblationAxis::Blocks;
  if (s == "d") return AblationAxis::Width;
  if (s == "P") return AblationAxis::Parts;
  throw std::invalid_argument("unknown ablation axis '" + s +
                              "' (fusion, variant, dense_sources, R, d, P)");
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::Fusion: return "fusion";
    case AblationAxis::Variant: return "variant";
    case AblationAxis::DenseSources: return "dense_sources";
    case AblationAxis::Blocks: return "R";
    case AblationAxis::Width: return "d";
    case AblationAxis::Parts: return "P";
  }
  return "fusion";
}

std::vector<AblationSetting> ablation_settings(const RunConfig& base, AblationAxis axis,
                                               const std::vector<int>& values) {
  std::vector<AblationSetting> out;
  const int levels = base.encoder.num_blocks();
  auto numeric = [&](std::vector<int> defaults, auto apply, const std::string& name) {
    const auto& chosen = values.empty() ? defaults : values;
    for (int v : chosen) {
      RunConfig c = base;
      apply(c, v);
      out.push_back({name + "=" + std::to_string(v), c});
    }
  };
  switch (axis) {
    case AblationAxis::Fusion:
      for (Fusion f : {Fusion::Attention, Fusion::Summation, Fusion::Concatenation}) {
        RunConfig c = base;
        c.decoder.variant = Variant::DenseIL;
        c.decoder.fusion = f;
        out.push_back({to_string(f), c});
      }
      break;
    case AblationAxis::Variant:
      for (Variant v : {Variant::TransEnc, Variant::TransDec, Variant::DenseIL}) {
        RunConfig c = base;
        c.decoder.variant = v;
        out.push_back({to_string(v), c});
      }
      break;
    case AblationAxis::DenseSources:
      for (int lo = levels; lo >= 1; --lo) {
        RunConfig c = base;
        c.decoder.variant = Variant::DenseIL;
        c.decoder.dense_sources.clear();
        std::string label;
        for (int b = levels; b >= lo; --b) {
          c.decoder.dense_sources.insert(c.decoder.dense_sources.begin(), b);
          label += (label.empty() ? "Z" : "+Z") + std::to_string(b);
        }
        out.push_back({label, c});
      }
      break;
    case AblationAxis::Blocks: {
      std::vector<int> defaults;
      for (int r = 0; r <= std::max(2, base.decoder.blocks); ++r) defaults.push_back(r);
      numeric(defaults, [](RunConfig& c, int v) { c.decoder.blocks = v; }, "R");
      break;
    }
    case AblationAxis::Width: {
      const int d = base.decoder.width;
      std::vector<int> defaults;
      for (int w : {d / 2, d, 2 * d}) {
        if (w >= base.decoder.heads && w % base.decoder.heads == 0) defaults.push_back(w);
      }
      numeric(defaults,
              [](RunConfig& c, int v) {
                c.decoder.width = v;
                c.decoder.ffn_hidden = v;
              },
              "d");
      break;
    }
    case AblationAxis::Parts: {
      std::set<int> defaults{1, std::max(1, base.parts / 2), base.parts};
      numeric(std::vector<int>(defaults.begin(), defaults.end()),
              [](RunConfig& c, int v) { c.parts = v; }, "P");
      break;
    }
  }
  for (auto& s : out) s.config.validate();
  return out;
}

std::vector<AblationRow> ablate(const RunConfig& base, AblationAxis axis, const Dataset& data,
                                const std::vector<int>& values,
                                const std::optional<std::filesystem::path>& out_dir) {
  std::vector<AblationRow> rows;
  for (const auto& s : ablation_settings(base, axis, values)) {
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / (to_string(axis) + "_" + s.label);
    const auto result = train_run(s.config, data, dir);
    rows.push_back({to_string(axis), s.label, result.report.metrics, result.report.flops});
  }
  if (out_dir) write_text(*out_dir / "ablation.csv", ablation_csv(rows));
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "axis,setting,mAP,R-1,R-5,R-10,R-20,decoder_macs,adapter_macs\n";
  for (const auto& r : rows) {
    out += r.axis + "," + r.setting + "," + fmt6(r.metrics.map) + "," + fmt6(r.metrics.r1) +
           "," + fmt6(r.metrics.r5) + "," + fmt6(r.metrics.r10) + "," + fmt6(r.metrics.r20) +
           "," + std::to_string(r.flops.blocks) + "," + std::to_string(r.flops.adapters) + "\n";
  }
  return out;
}

std::string attention_csv(Model& model, const Tracklet& tracklet) {
  const auto& cfg = model.config();
  if (cfg.decoder.blocks == 0) {
    throw std::invalid_argument("dump-attn: model has no decoder blocks (R=0)");
  }
  DecoderState state;
  {
    NoGradGuard guard;
    model.embed(eval_clip(tracklet, cfg), Mode::Eval, &state);
  }
  const bool dense = cfg.decoder.has_dense() && cfg.decoder.fusion == Fusion::Attention;
  const auto& maps = dense ? state.dense_attention : state.self_attention;
  const int parts = cfg.parts;
  const std::size_t n = static_cast<std::size_t>(cfg.train.chunks) * parts;
  std::string out = "kind,block,head,query_frame,query_part,key_source,key_frame,key_part,weight\n";
  char buf[64];
  for (const auto& m : maps) {
    for (int h = 0; h < m.heads; ++h) {
      for (std::size_t q = 0; q < m.queries; ++q) {
        for (std::size_t k = 0; k < m.keys; ++k) {
          const int src = m.key_source.empty() ? 0 : m.key_source[k];
          const std::size_t local = k % n;
          std::snprintf(buf, sizeof buf, "%.9g", m.weight(h, q, k));
          out += std::string(dense ? "dense" : "self") + "," + std::to_string(m.block) + "," +
                 std::to_string(h + 1) + "," + std::to_string(q / parts + 1) + "," +
                 std::to_string(q % parts + 1) + "," +
                 (src == 0 ? std::string("H") : "Z" + std::to_string(src)) + "," +
                 std::to_string(local / parts + 1) + "," + std::to_string(local % parts + 1) +
                 "," + buf + "\n";
        }
      }
    }
  }
  return out;
}

}  // namespace denseil
