#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "denseil/partition.hpp"
#include "denseil/posemb.hpp"
#include "denseil/rng.hpp"
#include "denseil/tensor.hpp"

namespace denseil {

enum class Variant { TransEnc, TransDec, DenseIL };
enum class Fusion { Attention, Summation, Concatenation };
enum class PosEmbMode { None, Spatial, Temporal, Step };

std::string to_string(Variant v);
std::string to_string(Fusion f);
std::string to_string(PosEmbMode m);
Variant parse_variant(const std::string& s);
Fusion parse_fusion(const std::string& s);
PosEmbMode parse_pos_emb(const std::string& s);

struct DecoderConfig {
  int blocks = 2;  // R
  int width = 64;  // d
  int heads = 4;
  int ffn_hidden = 64;
  Variant variant = Variant::DenseIL;
  Fusion fusion = Fusion::Attention;
  /// 1-based encoder blocks feeding Dense Attention. Empty means 2..L.
  std::vector<int> dense_sources;
  PosEmbMode pos_emb = PosEmbMode::Step;
  bool pos_per_block = false;
  bool ffn_before_dense = false;
  bool final_ln = false;
  double ln_eps = 1e-5;

  bool has_dense() const { return variant != Variant::TransEnc; }
  /// Encoder blocks used as dense keys/values, ascending. TransEnc: none;
  /// TransDec: {L}; DenseIL: dense_sources or 2..L.
  std::vector<int> sources_for(int encoder_blocks) const;
  void validate(int encoder_blocks) const;
};

struct AttentionParams {
  Tensor ln_gamma, ln_beta;
  Tensor wq, wk, wv, wo;  // [d x d], bias-free
};

struct FfnParams {
  Tensor ln_gamma, ln_beta;
  Tensor w1, b1, w2, b2;
};

/// Attention fusion uses `attn`; concatenation uses attn.ln_* and `w_cat`
/// [(S+1)d x d]; summation has no parameters.
struct DenseParams {
  AttentionParams attn;
  Tensor w_cat;
};

struct BlockParams {
  AttentionParams self;
  DenseParams dense;
  FfnParams ffn;
};

/// Softmax weights of one attention call, [heads x queries x keys].
struct AttentionMap {
  int block = 0;  // 1-based decoder block
  int heads = 0;
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<double> weights;
  std::vector<int> key_source;  // per key: 0 for H, l for Z^l

  double weight(int head, std::size_t q, std::size_t k) const {
    return weights[(static_cast<std::size_t>(head) * queries + q) * keys + k];
  }
};

struct DecoderState {
  std::vector<Tensor> hidden;  // H^r after each block
  std::vector<AttentionMap> self_attention;
  std::vector<AttentionMap> dense_attention;
};

/// Encoder block tokens (already adapted to width d) used as dense keys.
struct SourceTokens {
  int block = 0;  // 1-based encoder block
  TokenMatrix tokens;
};

/// Multi-head scaled dot-product attention: queries from `query_in`,
/// keys/values from `kv_in`, per-head width d/heads, scores scaled by
/// 1/sqrt(d/heads), heads concatenated and projected by wo.
Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in,
                            const AttentionParams& p, int heads, AttentionMap* record);

/// H + MHA(LN(H), LN(H)).
Tensor self_attention_block(const Tensor& h, const AttentionParams& p, int heads, double eps,
                            AttentionMap* record = nullptr);

/// Dense sub-layer. Attention: H + MHA(LN(H), [sources..., LN(H)]).
/// Summation: H + sum(sources). Concatenation: H + [sources..., LN(H)] w_cat.
Tensor dense_attention(const Tensor& h, std::span<const Tensor> sources, const DenseParams& p,
                       Fusion fusion, int heads, double eps, AttentionMap* record = nullptr);

/// H + FFN(LN(H)).
Tensor ffn_block(const Tensor& h, const FfnParams& p, double eps);

std::string decoder_block_prefix(int block);  // 1-based
void init_decoder_params(const DecoderConfig& cfg, int encoder_blocks, ParamStore& params,
                         CounterRng& rng);
BlockParams block_params(const ParamStore& params, const DecoderConfig& cfg, int block);

/// Selects the configured dense sources out of a partitioned pyramid.
std::vector<SourceTokens> gather_sources(const PartitionedPyramid& pyramid,
                                         const DecoderConfig& cfg, int encoder_blocks);

/// Positional rows added to the decoder input for the configured mode.
Tensor position_matrix(const StepEmbTable& table, PosEmbMode mode);

/// Runs R decoder blocks over tokens (+ positions) and mean-pools the rows
/// into the sequence embedding [d]. `emb` may be null for no positions.
Tensor decoder_forward(const TokenMatrix& tokens, std::span<const SourceTokens> sources,
                       const StepEmbTable* emb, const DecoderConfig& cfg,
                       const ParamStore& params, DecoderState* state = nullptr);

// -- classification head -----------------------------------------------------

void init_head_params(int width, int num_classes, ParamStore& params, CounterRng& rng);

struct HeadOutput {
  Tensor logits;        // [B x num_classes]
  Tensor bn_embedding;  // [B x d]
};

/// BN (batch statistics in train mode, running averages in eval mode)
/// followed by a bias-free classifier. Accepts [d] or [B x d].
HeadOutput classify_head(const Tensor& embeddings, ParamStore& params, Mode mode,
                         double eps = 1e-5, double momentum = 0.1);

// -- cost model --------------------------------------------------------------

/// Multiply-add counts, one per multiply-add, matmuls only.
///
/// Per block with n = I*P tokens, width d, FFN width h, S dense sources and
/// m = (S+1) n dense keys:
///   self attention  4 n d^2 + 2 n^2 d
///   dense attention 2 n d^2 + 2 m d^2 + 2 n m d
///   dense concat    (S+1) n d^2
///   dense sum       0
///   FFN             2 n d h
/// Adapters (outside the stack) cost n C_l d for the last block plus, when
/// R > 0 and the variant has a dense sub-layer, every dense source block.
struct FlopEstimate {
  std::uint64_t per_block = 0;
  std::uint64_t blocks = 0;  // R * per_block
  std::uint64_t adapters = 0;
  std::uint64_t total() const { return blocks + adapters; }
};

FlopEstimate estimate_decoder_flops(const DecoderConfig& cfg, int frames, int parts,
                                    std::span<const int> block_channels);

}  // namespace denseil
