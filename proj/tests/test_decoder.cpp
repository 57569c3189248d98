#include <doctest.h>

#include <cmath>

#include "denseil/decoder.hpp"
#include "denseil/ops.hpp"
#include "denseil/stats_error.hpp"
#include "support.hpp"

using namespace denseil;
using namespace denseil::testing;

namespace {

AttentionParams random_attention(std::size_t d, CounterRng& rng) {
  AttentionParams p;
  p.ln_gamma = random_tensor({d}, rng);
  p.ln_beta = random_tensor({d}, rng);
  p.wq = random_tensor({d, d}, rng);
  p.wk = random_tensor({d, d}, rng);
  p.wv = random_tensor({d, d}, rng);
  p.wo = random_tensor({d, d}, rng);
  return p;
}

double max_abs_diff(const Tensor& t, const Matrix& m) {
  double worst = 0.0;
  const auto d = t.dim(1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::fabs(t.values()[i * d + j] - m[i][j]));
  }
  return worst;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
  return worst;
}

struct Stack {
  DecoderConfig cfg;
  ParamStore params;
  int frames = 2, parts = 2;
  TokenMatrix tokens;
  std::vector<SourceTokens> sources;

  Stack(DecoderConfig c, CounterRng& rng) : cfg(std::move(c)) {
    init_decoder_params(cfg, 2, params, rng);
    const auto n = static_cast<std::size_t>(frames * parts), d = static_cast<std::size_t>(cfg.width);
    tokens = TokenMatrix::make(random_tensor({n, d}, rng, 1.0, false), frames, parts);
    sources = {{2, TokenMatrix::make(random_tensor({n, d}, rng, 1.0, false), frames, parts)}};
  }

  Tensor forward(DecoderState* state = nullptr) const {
    const auto emb = step_emb(frames, parts, cfg.width);
    return decoder_forward(tokens, sources, emb.get(), cfg, params, state);
  }
};

DecoderConfig small_decoder() {
  DecoderConfig cfg;
  cfg.blocks = 1;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.ffn_hidden = 8;
  return cfg;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("single token self attention puts weight 1 on itself") {
  CounterRng rng(1);
  const auto p = random_attention(4, rng);
  const Tensor h = random_tensor({1, 4}, rng, 1.0, false);
  AttentionMap map;
  const Tensor out = self_attention_block(h, p, 2, 1e-5, &map);
  for (double w : map.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-15));
  const Tensor x = ops::layer_norm(h, p.ln_gamma, p.ln_beta, 1e-5);
  const Tensor want = ops::add(h, ops::matmul(ops::matmul(x, p.wv), p.wo));
  CHECK(max_abs_diff(out, want) < 1e-12);
}

TEST_CASE("identical tokens give uniform attention") {
  CounterRng rng(2);
  const auto p = random_attention(6, rng);
  const Tensor row = random_tensor({1, 6}, rng, 1.0, false);
  std::vector<double> v;
  for (int i = 0; i < 5; ++i) v.insert(v.end(), row.values().begin(), row.values().end());
  AttentionMap map;
  self_attention_block(Tensor::from_values({5, 6}, v), p, 3, 1e-5, &map);
  for (double w : map.weights) CHECK(w == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("two-token single-head self attention matches the oracle") {
  CounterRng rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_attention(4, rng);
    const Tensor h = random_tensor({2, 4}, rng, 1.0, false);
    const Tensor out = self_attention_block(h, p, 1, 1e-5);
    CHECK(max_abs_diff(out, self_attention_oracle(to_matrix(h), p, 1, 1e-5)) < 1e-10);
  }
}

TEST_CASE("attention rows sum to one") {
  CounterRng rng(4);
  const auto p = random_attention(8, rng);
  AttentionMap map;
  multi_head_attention(random_tensor({3, 8}, rng, 3.0, false), random_tensor({7, 8}, rng, 3.0, false),
                       p, 4, &map);
  CHECK(map.queries == 3);
  CHECK(map.keys == 7);
  for (int hd = 0; hd < 4; ++hd) {
    for (std::size_t q = 0; q < 3; ++q) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += map.weight(hd, q, k);
      CHECK(std::fabs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("attention errors") {
  CounterRng rng(5);
  const auto p = random_attention(6, rng);
  const Tensor h = random_tensor({2, 6}, rng, 1.0, false);
  CHECK_THROWS(self_attention_block(h, p, 4, 1e-5));
  CHECK_THROWS_AS(multi_head_attention(h, random_tensor({2, 5}, rng, 1.0, false), p, 1, nullptr),
                  ShapeError);
  DecoderConfig cfg;
  cfg.width = 10;
  cfg.heads = 4;
  CHECK_THROWS(cfg.validate(4));
}

TEST_CASE("dense attention without sources reduces to self attention") {
  CounterRng rng(6);
  DenseParams p;
  p.attn = random_attention(4, rng);
  const Tensor h = random_tensor({3, 4}, rng, 1.0, false);
  const Tensor a = dense_attention(h, {}, p, Fusion::Attention, 2, 1e-5);
  const Tensor b = self_attention_block(h, p.attn, 2, 1e-5);
  CHECK(max_abs_diff(a, b) < 1e-14);
}

TEST_CASE("summation with zero sources leaves H unchanged") {
  CounterRng rng(7);
  const Tensor h = random_tensor({3, 4}, rng, 1.0, false);
  const std::vector<Tensor> zeros{Tensor::zeros({3, 4}), Tensor::zeros({3, 4})};
  const Tensor out = dense_attention(h, zeros, DenseParams{}, Fusion::Summation, 1, 1e-5);
  CHECK(max_abs_diff(out, h) == 0.0);
}

TEST_CASE("one-source dense attention over four keys matches the oracle") {
  CounterRng rng(8);
  for (int t = 0; t < 10; ++t) {
    DenseParams p;
    p.attn = random_attention(4, rng);
    const Tensor h = random_tensor({2, 4}, rng, 1.0, false);
    const std::vector<Tensor> src{random_tensor({2, 4}, rng, 1.0, false)};
    AttentionMap map;
    const Tensor out = dense_attention(h, src, p, Fusion::Attention, 1, 1e-5, &map);
    CHECK(map.keys == 4);
    CHECK(max_abs_diff(out, dense_attention_oracle(to_matrix(h), {to_matrix(src[0])}, p,
                                                   Fusion::Attention, 1, 1e-5)) < 1e-10);
  }
}

TEST_CASE("concatenation fusion matches the oracle") {
  CounterRng rng(9);
  DenseParams p;
  p.attn = random_attention(4, rng);
  p.w_cat = random_tensor({12, 4}, rng);
  const Tensor h = random_tensor({3, 4}, rng, 1.0, false);
  const std::vector<Tensor> src{random_tensor({3, 4}, rng, 1.0, false),
                                random_tensor({3, 4}, rng, 1.0, false)};
  const Tensor out = dense_attention(h, src, p, Fusion::Concatenation, 1, 1e-5);
  CHECK(max_abs_diff(out, dense_attention_oracle(to_matrix(h), {to_matrix(src[0]), to_matrix(src[1])},
                                                 p, Fusion::Concatenation, 1, 1e-5)) < 1e-12);
}

TEST_CASE("dense source width mismatch is rejected") {
  CounterRng rng(10);
  DenseParams p;
  p.attn = random_attention(4, rng);
  const Tensor h = random_tensor({2, 4}, rng, 1.0, false);
  const std::vector<Tensor> bad{random_tensor({2, 3}, rng, 1.0, false)};
  CHECK_THROWS_AS(dense_attention(h, bad, p, Fusion::Attention, 1, 1e-5), ShapeError);
  CHECK_THROWS_AS(dense_attention(h, bad, p, Fusion::Summation, 1, 1e-5), ShapeError);
}

TEST_CASE("variant source selection") {
  DecoderConfig cfg;
  CHECK(cfg.sources_for(4) == std::vector<int>{2, 3, 4});
  cfg.dense_sources = {4, 3, 4};
  CHECK(cfg.sources_for(4) == std::vector<int>{3, 4});
  cfg.variant = Variant::TransDec;
  CHECK(cfg.sources_for(4) == std::vector<int>{4});
  cfg.variant = Variant::TransEnc;
  CHECK(cfg.sources_for(4).empty());
  CHECK_FALSE(cfg.has_dense());
  DecoderConfig bad;
  bad.dense_sources = {5};
  CHECK_THROWS(bad.validate(4));
  CHECK(parse_variant(to_string(Variant::TransDec)) == Variant::TransDec);
  CHECK(parse_fusion(to_string(Fusion::Concatenation)) == Fusion::Concatenation);
  CHECK(parse_pos_emb(to_string(PosEmbMode::Temporal)) == PosEmbMode::Temporal);
  CHECK_THROWS(parse_variant("bogus"));
}

TEST_CASE("R=0 returns the mean of tokens plus positions") {
  CounterRng rng(11);
  auto cfg = small_decoder();
  cfg.blocks = 0;
  Stack s(cfg, rng);
  const Tensor e = s.forward();
  const auto emb = step_emb(2, 2, 8);
  const Tensor want = ops::mean_rows(ops::add(s.tokens.tokens, emb->combined));
  CHECK(max_abs_diff(e, want) < 1e-15);
}

TEST_CASE("decoder state records maps with the expected key counts") {
  CounterRng rng(12);
  auto cfg = small_decoder();
  cfg.blocks = 2;
  Stack s(cfg, rng);
  DecoderState state;
  s.forward(&state);
  CHECK(state.hidden.size() == 2);
  REQUIRE(state.self_attention.size() == 2);
  REQUIRE(state.dense_attention.size() == 2);
  for (const auto& m : state.dense_attention) {
    CHECK(m.keys == 2 * 4);
    CHECK(m.key_source.size() == 8);
    CHECK(m.key_source.front() == 2);
    CHECK(m.key_source.back() == 0);
  }
  CHECK(state.self_attention[1].block == 2);
}

TEST_CASE("trans_enc has no dense sub-layer") {
  CounterRng rng(13);
  auto cfg = small_decoder();
  cfg.variant = Variant::TransEnc;
  Stack s(cfg, rng);
  CHECK_FALSE(s.params.contains(decoder_block_prefix(1) + "dense.wq"));
  DecoderState state;
  s.forward(&state);
  CHECK(state.dense_attention.empty());
}

TEST_CASE("dense_il without sources is rejected") {
  CounterRng rng(14);
  Stack s(small_decoder(), rng);
  s.sources.clear();
  CHECK_THROWS(s.forward());
}

TEST_CASE("residual identity with zero output projections") {
  CounterRng rng(15);
  auto cfg = small_decoder();
  cfg.blocks = 3;
  Stack s(cfg, rng);
  for (auto& p : s.params.params()) {
    const auto& n = p.name;
    const bool out_proj = n.ends_with(".wo") || n.ends_with("ffn.w2") || n.ends_with("ffn.b2");
    if (out_proj) std::fill(p.tensor.mutable_values().begin(), p.tensor.mutable_values().end(), 0.0);
  }
  const auto emb = step_emb(2, 2, 8);
  const Tensor want = ops::mean_rows(ops::add(s.tokens.tokens, emb->combined));
  CHECK(max_abs_diff(s.forward(), want) < 1e-15);
}

TEST_CASE("frame swap changes the embedding only with positions") {
  CounterRng rng(16);
  for (PosEmbMode mode : {PosEmbMode::None, PosEmbMode::Step}) {
    auto cfg = small_decoder();
    cfg.pos_emb = mode;
    Stack s(cfg, rng);
    const Tensor a = s.forward();
    auto swap_frames = [](const Tensor& t) {
      std::vector<double> v(t.values().begin(), t.values().end());
      const std::size_t half = v.size() / 2;
      std::rotate(v.begin(), v.begin() + static_cast<long>(half), v.end());
      return Tensor::from_values(t.shape(), v);
    };
    s.tokens = TokenMatrix::make(swap_frames(s.tokens.tokens), 2, 2);
    s.sources[0].tokens = TokenMatrix::make(swap_frames(s.sources[0].tokens.tokens), 2, 2);
    const double diff = max_abs_diff(a, s.forward());
    if (mode == PosEmbMode::None) {
      CHECK(diff < 1e-8);
    } else {
      CHECK(diff > 1e-6);
    }
  }
}

TEST_CASE("gradient through a one-block dense_il decoder") {
  CounterRng rng(17);
  Stack s(small_decoder(), rng);
  std::vector<Tensor> inputs;
  for (auto& p : s.params.params()) inputs.push_back(p.tensor);
  const CounterRng proj = rng.substream(1);
  const double err = grad_rel_error([&] { CounterRng r = proj; return random_projection(s.forward(), r); },
                                    inputs);
  CHECK(err < 1e-4);
}

TEST_CASE("head with a zero classifier gives zero logits") {
  CounterRng rng(18);
  ParamStore params;
  init_head_params(4, 3, params, rng);
  std::fill(params.get("head.classifier.w").mutable_values().begin(),
            params.get("head.classifier.w").mutable_values().end(), 0.0);
  const auto out = classify_head(random_tensor({5, 4}, rng, 1.0, false), params, Mode::Train);
  CHECK(out.logits.shape() == Shape{5, 3});
  for (double v : out.logits.values()) CHECK(v == 0.0);
}

TEST_CASE("head with opposite class columns") {
  CounterRng rng(19);
  ParamStore params;
  init_head_params(3, 2, params, rng);
  const std::vector<double> u{0.5, -1.0, 2.0};
  auto w = params.get("head.classifier.w").mutable_values();
  for (std::size_t j = 0; j < 3; ++j) {
    w[j * 2] = u[j];
    w[j * 2 + 1] = -u[j];
  }
  auto set = [&](const std::string& n, std::vector<double> v) {
    std::copy(v.begin(), v.end(), params.get("head.bn." + n).mutable_values().begin());
  };
  set("running_mean", {1.0, 0.0, -1.0});
  set("running_var", {4.0, 1.0, 0.25});
  set("tracked", {1.0});
  const Tensor x = Tensor::from_values({3}, {3.0, 2.0, 0.0});
  const auto out = classify_head(x, params, Mode::Eval, 1e-12);
  const std::vector<double> bn{(3.0 - 1.0) / 2.0, 2.0, (0.0 + 1.0) / 0.5};
  double dot = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(out.bn_embedding.values()[j] == doctest::Approx(bn[j]).epsilon(1e-10));
    dot += bn[j] * u[j];
  }
  CHECK(out.logits.values()[0] == doctest::Approx(dot).epsilon(1e-10));
  CHECK(out.logits.values()[1] == doctest::Approx(-dot).epsilon(1e-10));
  const auto again = classify_head(x, params, Mode::Eval, 1e-12);
  CHECK(max_abs_diff(again.logits, out.logits) == 0.0);
}

TEST_CASE("head eval before training raises") {
  CounterRng rng(20);
  ParamStore params;
  init_head_params(4, 2, params, rng);
  CHECK_THROWS_AS(classify_head(Tensor::zeros({4}), params, Mode::Eval), MissingStatisticsError);
}

TEST_CASE("flop estimate: hand case and instrumented count agree") {
  DecoderConfig cfg;
  cfg.blocks = 1;
  cfg.width = 8;
  cfg.heads = 1;
  cfg.ffn_hidden = 8;
  cfg.pos_emb = PosEmbMode::None;
  const std::vector<int> channels{4, 6};
  const auto est = estimate_decoder_flops(cfg, 2, 2, channels);
  // n=4, d=8, h=8, S=1: self 1280, dense 2048, ffn 512.
  CHECK(est.per_block == 3840);
  CHECK(est.blocks == 3840);

  CounterRng rng(21);
  ParamStore params;
  init_decoder_params(cfg, 2, params, rng);
  const auto tokens = TokenMatrix::make(random_tensor({4, 8}, rng, 1.0, false), 2, 2);
  const std::vector<SourceTokens> src{{2, TokenMatrix::make(random_tensor({4, 8}, rng, 1.0, false), 2, 2)}};
  NoGradGuard guard;
  MacCounter counter;
  decoder_forward(tokens, src, nullptr, cfg, params);
  CHECK(counter.count() == est.blocks);
}

TEST_CASE("flop estimate scales linearly in R") {
  const std::vector<int> channels{16, 32, 64, 128};
  DecoderConfig cfg;
  cfg.blocks = 0;
  CHECK(estimate_decoder_flops(cfg, 8, 4, channels).blocks == 0);
  cfg.blocks = 2;
  const auto two = estimate_decoder_flops(cfg, 8, 4, channels);
  cfg.blocks = 4;
  const auto four = estimate_decoder_flops(cfg, 8, 4, channels);
  CHECK(four.blocks == 2 * two.blocks);
  CHECK(four.adapters == two.adapters);
  CHECK(four.total() == four.blocks + four.adapters);
  for (Fusion f : {Fusion::Summation, Fusion::Concatenation}) {
    cfg.fusion = f;
    CHECK(estimate_decoder_flops(cfg, 8, 4, channels).per_block < four.per_block);
  }
}

}  // TEST_SUITE
