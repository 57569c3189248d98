#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "denseil/config.hpp"
#include "denseil/data.hpp"
#include "denseil/decoder.hpp"
#include "denseil/metrics.hpp"
#include "denseil/tensor.hpp"

namespace denseil {

/// Encoder, adapters, decoder and head with their parameters.
class Model {
 public:
  Model(const RunConfig& cfg, int num_classes);

  const RunConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int num_classes() const { return num_classes_; }

  /// Sequence embedding [d] of one clip [I x C x H x W] before the head.
  Tensor embed(const Tensor& clip, Mode mode, DecoderState* state = nullptr);
  HeadOutput head(const Tensor& embeddings, Mode mode);
  FlopEstimate flops() const;

 private:
  RunConfig cfg_;
  int num_classes_;
  ParamStore params_;
  std::vector<int> needed_blocks_;
};

/// Builds a model shaped like the checkpoint (class count read from the
/// head) and loads its parameters.
Model load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double triplet = 0.0;
  double total = 0.0;
};

struct RunReport {
  std::vector<EpochLog> epochs;
  RankMetrics metrics;
  FlopEstimate flops;
  double wall_seconds = 0.0;

  /// Columns epoch,lr,ce,triplet,total.
  std::string epochs_csv() const;
  /// Final metrics and cost; wall-clock is deliberately left out so that
  /// the summary is reproducible.
  std::string summary_json() const;
};

struct TrainResult {
  RunReport report;
  Model model;
};

/// Trains on data.train and evaluates on query/gallery. With an output
/// directory it writes config.txt, checkpoint.dil (plus interval
/// checkpoints), report.csv, summary.json, metrics.csv and timing.json.
TrainResult train_run(const RunConfig& cfg, const Dataset& data,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Identity labels 0..K-1 in ascending identity order.
std::map<int, int> label_map(const std::vector<Tracklet>& tracklets);

/// One fixed restricted sample per tracklet, drawn from eval_seed and the
/// tracklet id.
Tensor eval_clip(const Tracklet& t, const RunConfig& cfg);

/// Post-BN eval-mode embeddings [N x d] in input order.
Tensor embed_tracklets(Model& model, const std::vector<Tracklet>& tracklets);

struct EvalOptions {
  /// Use the query set as gallery and keep same-camera matches.
  bool self_match = false;
};
RankMetrics evaluate(Model& model, const Dataset& data, const EvalOptions& opts = {});

enum class AblationAxis { Fusion, Variant, DenseSources, Blocks, Width, Parts };
AblationAxis parse_axis(const std::string& s);
std::string to_string(AblationAxis a);

struct AblationSetting {
  std::string label;
  RunConfig config;
};
/// Settings along an axis. `values` overrides the defaults for the numeric
/// axes (R, d, P) and is ignored otherwise.
std::vector<AblationSetting> ablation_settings(const RunConfig& base, AblationAxis axis,
                                               const std::vector<int>& values = {});

struct AblationRow {
  std::string axis;
  std::string setting;
  RankMetrics metrics;
  FlopEstimate flops;
};
std::vector<AblationRow> ablate(const RunConfig& base, AblationAxis axis, const Dataset& data,
                                const std::vector<int>& values = {},
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);
/// Columns axis,setting,mAP,R-1,R-5,R-10,R-20,decoder_macs,adapter_macs.
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// Attention weights of one eval-mode forward pass as CSV with columns
/// kind,block,head,query_frame,query_part,key_source,key_frame,key_part,weight
/// (all indices 1-based; key_source is H or Z<l>). Dense maps are written
/// when the variant has a dense attention sub-layer, self-attention maps
/// otherwise.
std::string attention_csv(Model& model, const Tracklet& tracklet);

}  // namespace denseil
