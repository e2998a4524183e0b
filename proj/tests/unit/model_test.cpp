#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "naive.hpp"
#include "trunet/errors.hpp"
#include "trunet/model/model.hpp"

using namespace trunet;

namespace {

// Frozen from tests/oracles/shape_walk.py.
constexpr std::int64_t kTinyBoth = 1042061, kTinyNoTransformer = 800909, kTinyNoDilated = 344461,
                       kTinyNeither = 144269;
constexpr std::int64_t kFullBoth = 73062113, kFullNoTransformer = 57583329, kFullNoDilated = 28487393,
                       kFullNeither = 15630049;
constexpr std::int64_t kResidual8x8 = 1184;

ModelConfig tiny_with(bool t, bool d) {
  ModelConfig c = ModelConfig::tiny();
  c.use_transformer = t;
  c.use_dilated = d;
  return c;
}

void zero_where(ParameterStore<double>& s, const std::string& needle) {
  for (const auto& n : s.names()) {
    if (n.find(needle) != std::string::npos) s.at(n).fill(0.0);
  }
}

}  // namespace

TEST(Config, TinyAndFullPresets) {
  const auto t = ModelConfig::tiny();
  EXPECT_EQ(t.width_mult, 0.125);
  EXPECT_EQ(t.input_size, 64);
  EXPECT_EQ(t.heads, 4);
  EXPECT_EQ(t.bottleneck_channels(), 128);
  const auto f = ModelConfig::full();
  EXPECT_EQ(f.stage_depths, (std::array<int, 4>{3, 4, 6, 3}));
  EXPECT_EQ(f.input_size, 256);
  EXPECT_EQ(f.heads, 8);
  EXPECT_EQ(f.ffn_ratio, 4);
}

TEST(Config, TextRoundTripAndRejection) {
  auto c = tiny_with(false, true);
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text("width_mult=1\nbogus=2\n"), ConfigError);
  EXPECT_EQ(parse_ratio("1/8"), 0.125);
  EXPECT_THROW(parse_ratio("1/0"), ConfigError);
}

TEST(Config, ValidationNamesTheField) {
  auto c = ModelConfig::tiny();
  c.input_size = 72;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::tiny();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::full();
  c.input_size = 512;  // 1024 tokens allowed, 1024 < 32*32? equal is fine, 48*48 is not
  EXPECT_NO_THROW(c.validate());
  c.input_size = 768;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("max_tokens"), std::string::npos);
  }
}

TEST(ParamCount, MatchesShapeWalk) {
  EXPECT_EQ(param_count(tiny_with(true, true)), kTinyBoth);
  EXPECT_EQ(param_count(tiny_with(false, true)), kTinyNoTransformer);
  EXPECT_EQ(param_count(tiny_with(true, false)), kTinyNoDilated);
  EXPECT_EQ(param_count(tiny_with(false, false)), kTinyNeither);
  auto f = ModelConfig::full();
  EXPECT_EQ(param_count(f), kFullBoth);
  f.use_transformer = false;
  EXPECT_EQ(param_count(f), kFullNoTransformer);
  f.use_dilated = false;
  EXPECT_EQ(param_count(f), kFullNeither);
  f.use_transformer = true;
  EXPECT_EQ(param_count(f), kFullNoDilated);
  EXPECT_EQ(residual_block_layout("r", 8, 8).scalar_count(), kResidual8x8);
}

TEST(ParamCount, AblationOrderingAndWidthScaling) {
  EXPECT_GT(param_count(tiny_with(true, true)), param_count(tiny_with(false, true)));
  EXPECT_GT(param_count(tiny_with(false, true)), param_count(tiny_with(false, false)));
  auto a = ModelConfig::tiny(), b = ModelConfig::tiny();
  b.width_mult = 0.25;
  EXPECT_GT(param_count(b), 2 * param_count(a));
}

TEST(ParamCount, EqualsStoreSizeAndNamesAreUnique) {
  const TransResUNet<float> m(ModelConfig::tiny());
  const auto store = m.init(1);
  EXPECT_EQ(store.scalar_count(), param_count(ModelConfig::tiny()));
  const std::set<std::string> unique(store.names().begin(), store.names().end());
  EXPECT_EQ(unique.size(), store.names().size());
  EXPECT_EQ(m.init(2).names(), store.names());
  EXPECT_TRUE(unique.count("encoder.stage2.block1.conv2.conv.weight"));
}

TEST(ParamCount, NeitherConfigDropsExactlyTheBridge) {
  const auto both = model_layout(tiny_with(true, true)), neither = model_layout(tiny_with(false, false));
  std::set<std::string> a, b;
  for (const auto& p : both.params) a.insert(p.name);
  for (const auto& p : neither.params) b.insert(p.name);
  std::set<std::string> dropped;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(dropped, dropped.end()));
  EXPECT_TRUE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
  for (const auto& n : dropped) EXPECT_EQ(n.rfind("bridge.", 0), 0u) << n;
  for (const auto& n : b) EXPECT_NE(n.rfind("bridge.", 0), 0u) << n;
}

TEST(ResidualBlock, ZeroBranchIsReluOfInput) {
  Rng rng(1);
  auto store = init_parameters<double>(residual_block_layout("r", 3, 3), 1);
  zero_where(store, "conv.weight");
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kTrain);
  const auto x = oracle::random_tensor<double>({2, 3, 5, 5}, rng);
  const auto y = residual_block(ctx, "r", g.constant(x), 3).value();
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], std::max(0.0, x[i]));
}

TEST(ResidualBlock, ShortcutOnlyWhenChannelsChange) {
  const auto same = residual_block_layout("r", 8, 8), proj = residual_block_layout("r", 8, 4);
  for (const auto& p : same.params) EXPECT_EQ(p.name.find("shortcut"), std::string::npos);
  bool has = false;
  for (const auto& p : proj.params) has |= p.name.find("shortcut") != std::string::npos;
  EXPECT_TRUE(has);
  EXPECT_EQ(same.scalar_count(), 3 * 3 * 8 * 8 * 2 + 4 * 8);
}

TEST(Encoder, TinyShapes) {
  const auto cfg = ModelConfig::tiny();
  auto store = init_parameters<float>(encoder_layout(cfg), 2);
  Graph<float> g;
  ForwardContext<float> ctx(g, store, NormMode::kTrain);
  Rng rng(2);
  const auto f = encoder_forward(ctx, cfg, g.constant(oracle::random_tensor<float>({2, 3, 64, 64}, rng)));
  EXPECT_EQ(f.bottleneck.shape(), (Shape{2, 128, 4, 4}));
  const std::array<std::int64_t, 4> sizes{64, 32, 16, 8};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(f.skips[i].shape()[2], sizes[i]);
  EXPECT_EQ(f.skips[1].shape()[1], 8);
  EXPECT_EQ(f.skips[2].shape()[1], 32);
  EXPECT_EQ(f.skips[3].shape()[1], 64);
}

TEST(Encoder, FullWidthBottleneck) {
  const auto cfg = ModelConfig::full();
  auto store = init_parameters<float>(encoder_layout(cfg), 3);
  Graph<float> g;
  NoGradGuard<float> ng(g);
  ForwardContext<float> ctx(g, store, NormMode::kEval);
  const auto f = encoder_forward(ctx, cfg, g.constant(Tensor<float>({1, 3, 256, 256}, 0.5f)));
  EXPECT_EQ(f.bottleneck.shape(), (Shape{1, 1024, 16, 16}));
}

TEST(Transformer, ZeroProjectionsAreIdentity) {
  auto cfg = ModelConfig::tiny();
  cfg.heads = 2;
  auto store = init_parameters<double>(transformer_layout("t", 8, 9, cfg.ffn_ratio), 4);
  zero_where(store, ".weight");
  zero_where(store, "pos_embedding");
  for (const char* ln : {"t.ln1.weight", "t.ln2.weight"}) store.at(ln).fill(1.0);
  Rng rng(4);
  const auto x = oracle::random_tensor<double>({2, 8, 3, 3}, rng);
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kTrain);
  EXPECT_EQ(transformer_encoder_block(ctx, "t", cfg, g.constant(x)).value(), x);
}

TEST(Attention, UniformWeightsAverageTokens) {
  auto store = init_parameters<double>(transformer_layout("t", 2, 4, 1), 5);
  store.at("t.attn.q.weight").fill(0);
  store.at("t.attn.k.weight").fill(0);
  for (const char* w : {"t.attn.v.weight", "t.attn.o.weight"}) {
    store.at(w).fill(0);
    store.at(w)[0] = store.at(w)[3] = 1;
  }
  Rng rng(5);
  const auto x = oracle::random_tensor<double>({1, 4, 2}, rng);
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kTrain);
  Var<double> weights;
  const auto y = multi_head_attention(ctx, "t.attn", g.constant(x), 1, &weights).value();
  for (double w : weights.value().data()) EXPECT_DOUBLE_EQ(w, 0.25);
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < 2; ++c) {
      const double m = (x[c] + x[2 + c] + x[4 + c] + x[6 + c]) / 4;
      EXPECT_NEAR(y[t * 2 + c], m, 1e-15);
    }
}

TEST(Attention, SingleHeadMatchesDirectFormula) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto store = init_parameters<float>(transformer_layout("t", 2, 4, 1), 6 + trial);
    for (const auto& n : store.names()) {
      if (n.find("attn") != std::string::npos) store.at(n) = oracle::random_tensor<float>(store.at(n).shape(), rng);
    }
    const auto x = oracle::random_tensor<float>({1, 4, 2}, rng, -2, 2);
    Graph<float> g;
    ForwardContext<float> ctx(g, store, NormMode::kTrain);
    Var<float> w;
    const auto y = multi_head_attention(ctx, "t.attn", g.constant(x), 1, &w).value();
    const auto ref = oracle::single_head_attention(
        x.reshaped({4, 2}), store.at("t.attn.q.weight"), store.at("t.attn.q.bias"), store.at("t.attn.k.weight"),
        store.at("t.attn.v.weight"), store.at("t.attn.v.bias"), store.at("t.attn.o.weight"), store.at("t.attn.o.bias"));
    EXPECT_LT(oracle::max_rel_diff(y.reshaped({4, 2}), ref), 1e-5);
    for (int r = 0; r < 4; ++r) {
      double s = 0;
      for (int c = 0; c < 4; ++c) s += w.value()[r * 4 + c];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Attention, TokenPermutationEquivariance) {
  const int n = 6, c = 4;
  auto store = init_parameters<double>(transformer_layout("t", c, n, 2), 7);
  Rng rng(7);
  for (const auto& name : store.names()) store.at(name) = oracle::random_tensor<double>(store.at(name).shape(), rng);
  auto x = oracle::random_tensor<double>({1, n, c}, rng);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Tensor<double> xp({1, n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) xp[i * c + j] = x[perm[i] * c + j];
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kTrain);
  const auto y = multi_head_attention(ctx, "t.attn", g.constant(x), 2).value();
  const auto yp = multi_head_attention(ctx, "t.attn", g.constant(xp), 2).value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) EXPECT_NEAR(yp[i * c + j], y[perm[i] * c + j], 1e-12);
}

TEST(Dilated, PreservesSizeAndReducesChannels) {
  auto store = init_parameters<float>(dilated_conv_block_layout("d", 4), 8);
  Rng rng(8);
  for (Shape s : {Shape{1, 4, 1, 1}, Shape{2, 4, 3, 5}, Shape{1, 4, 16, 16}}) {
    Graph<float> g;
    ForwardContext<float> ctx(g, store, NormMode::kTrain);
    const auto y = dilated_conv_block(ctx, "d", g.constant(oracle::random_tensor<float>(s, rng)));
    EXPECT_EQ(y.shape(), s);
  }
  EXPECT_EQ(store.at("d.fuse.conv.weight").shape(), (Shape{4, 16, 1, 1}));
}

TEST(Dilated, RateNineBranchSpansNineteenPixels) {
  auto store = init_parameters<double>(dilated_conv_block_layout("d", 1), 9);
  zero_where(store, "conv.weight");
  store.at("d.branch4.conv.weight").fill(1.0);
  store.at("d.fuse.conv.weight").fill(1.0);
  Tensor<double> impulse({1, 1, 41, 41});
  impulse.at(0, 0, 20, 20) = 1.0;
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kEval);
  const auto y = dilated_conv_block(ctx, "d", g.constant(impulse)).value();
  int lo = 41, hi = -1;
  for (int x = 0; x < 41; ++x) {
    if (y.at(0, 0, 20, x) != 0) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  EXPECT_EQ(hi - lo + 1, 19);
}

TEST(Decoder, ShapesAndGradientReachesBothInputs) {
  auto store = init_parameters<double>(decoder_block_layout("u", 6, 3, 5), 10);
  Rng rng(10);
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kTrain);
  auto x = g.leaf(oracle::random_tensor<double>({2, 6, 8, 8}, rng));
  auto skip = g.leaf(oracle::random_tensor<double>({2, 3, 16, 16}, rng));
  auto y = decoder_block(ctx, "u", x, skip, 5);
  EXPECT_EQ(y.shape(), (Shape{2, 5, 16, 16}));
  Tensor<double> r(y.shape());
  for (auto& v : r.data()) v = rng.uniform(-1, 1);
  g.backward(sum(mul(y, g.constant(r))));
  auto nonzero = [](const Tensor<double>& t) {
    return std::any_of(t.data().begin(), t.data().end(), [](double v) { return v != 0; });
  };
  EXPECT_TRUE(nonzero(g.grad(x)));
  EXPECT_TRUE(nonzero(g.grad(skip)));
  EXPECT_THROW(decoder_block(ctx, "u", x, g.constant(Tensor<double>({2, 3, 12, 12})), 5), ShapeError);
}

TEST(Head, ZeroWeightsGiveHalfAndBiasSaturatesMonotonically) {
  auto store = init_parameters<double>(segmentation_head_layout("h", 3), 11);
  store.at("h.conv.weight").fill(0);
  Rng rng(11);
  const auto x = oracle::random_tensor<double>({1, 3, 4, 4}, rng);
  double prev = 0;
  for (double b : {0.0, 1.0, 4.0, 10.0, 30.0}) {
    store.at("h.conv.bias").fill(b);
    Graph<double> g;
    ForwardContext<double> ctx(g, store, NormMode::kTrain);
    const auto y = segmentation_head(ctx, "h", g.constant(x)).value();
    if (b == 0) {
      for (double v : y.data()) EXPECT_EQ(v, 0.5);
    }
    EXPECT_GT(y[0], prev);
    EXPECT_LT(y[0], 1.0);
    prev = y[0];
  }
}

TEST(Model, TinyForwardInOpenUnitInterval) {
  const TransResUNet<float> m(ModelConfig::tiny());
  auto store = m.init(12);
  Rng rng(12);
  Graph<float> g;
  ForwardContext<float> ctx(g, store, NormMode::kTrain);
  const auto out = m.forward(ctx, g.constant(oracle::random_tensor<float>({2, 3, 64, 64}, rng, 0, 1)));
  EXPECT_EQ(out.probabilities.shape(), (Shape{2, 1, 64, 64}));
  for (float v : out.probabilities.value().data()) {
    ASSERT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_EQ(out.bridge.shape(), (Shape{2, 256, 4, 4}));
}

TEST(Model, NeitherBranchPassesBottleneckThrough) {
  const TransResUNet<float> m(tiny_with(false, false));
  auto store = m.init(13);
  Graph<float> g;
  ForwardContext<float> ctx(g, store, NormMode::kTrain);
  const auto out = m.forward(ctx, g.constant(Tensor<float>({1, 3, 64, 64}, 0.3f)));
  EXPECT_EQ(out.bridge.id(), out.bottleneck.id());
  EXPECT_EQ(out.bridge.shape(), (Shape{1, 128, 4, 4}));
}

TEST(Model, EveryParameterGetsGradient) {
  auto cfg = ModelConfig::tiny();
  cfg.input_size = 128;
  const TransResUNet<double> m(cfg);
  auto store = m.init(14);
  Rng rng(14);
  Graph<double> g;
  ForwardContext<double> ctx(g, store, NormMode::kTrain);
  const auto out = m.forward(ctx, g.constant(oracle::random_tensor<double>({2, 3, 128, 128}, rng, 0, 1)));
  Tensor<double> r(out.probabilities.shape());
  for (auto& v : r.data()) v = rng.uniform(-1, 1);
  g.backward(sum(mul(out.probabilities, g.constant(r))));
  for (const auto& [name, grad] : ctx.gradients()) {
    EXPECT_TRUE(std::any_of(grad.data().begin(), grad.data().end(), [](double v) { return v != 0; })) << name;
  }
}
