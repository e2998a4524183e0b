#include "trunet/grad_suite.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

#include "trunet/errors.hpp"
#include "trunet/model/model.hpp"
#include "trunet/ops.hpp"
#include "trunet/rng.hpp"
#include "trunet/train/loss.hpp"

namespace trunet {
namespace {

using D = double;
using V = Var<D>;
using G = Graph<D>;

// Five-point differences have O(h^4) truncation error, which allows a step
// large enough to keep round-off small. Primitive inputs stay clear of kinks
// by construction; block and model checks freeze the relu / max-pool regime.
constexpr double kStep = 1e-3;

// Values in [-1, -0.1] u [0.1, 1], clear of the relu kink.
Tensor<D> random_tensor(Shape shape, Rng& rng) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t.data()) {
    const double m = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Distinct values spaced 0.05 apart, so no max-pool window holds a near tie.
Tensor<D> distinct_tensor(Shape shape, Rng& rng) {
  Tensor<D> t(std::move(shape));
  std::vector<std::int64_t> order(static_cast<std::size_t>(t.numel()));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i) t[order[i]] = 0.05 * static_cast<double>(i) - 1.0;
  return t;
}

// sum(y * R) with R fixed by `seed`, so every output element carries a
// distinct weight.
V weighted_sum(const V& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<D> r(y.shape());
  for (auto& v : r.data()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, y.graph().constant(std::move(r))));
}

struct Suite {
  std::vector<GradCase> cases;
  Rng rng;
  std::uint64_t weight_seed;
  double tolerance;
  bool freeze = false;

  void check(const std::string& name, const Tensor<D>& point, const ScalarProgram& f,
             std::span<const std::int64_t> coords = {}) {
    GradCase c{name, finite_diff_check(f, point, kStep, coords, {FdStencil::kFivePoint, freeze}), tolerance,
               coords.empty() ? point.numel() : static_cast<std::int64_t>(coords.size())};
    cases.push_back(std::move(c));
  }

  // Checks y = op(x) through a weighted sum.
  void unary(const std::string& name, const Tensor<D>& point, const std::function<V(const V&)>& op) {
    const std::uint64_t seed = weight_seed++;
    check(name, point, [op, seed](G&, const V& x) { return weighted_sum(op(x), seed); });
  }
};

void primitive_cases(Suite& s) {
  Rng& rng = s.rng;
  {
    const ConvSpec spec = ConvSpec::square(3, 2, 1);
    auto x = random_tensor({2, 3, 6, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
    s.unary("conv2d.input", x, [=](const V& v) {
      G& g = v.graph();
      return conv2d(v, g.constant(w), g.constant(b), spec);
    });
    s.unary("conv2d.weight", w, [=](const V& v) {
      G& g = v.graph();
      return conv2d(g.constant(x), v, g.constant(b), spec);
    });
    s.unary("conv2d.bias", b, [=](const V& v) {
      G& g = v.graph();
      return conv2d(g.constant(x), g.constant(w), v, spec);
    });
  }
  {
    const ConvSpec spec = ConvSpec::same(3, 3);
    auto x = random_tensor({1, 2, 8, 8}, rng), w = random_tensor({2, 2, 3, 3}, rng);
    s.unary("conv2d.dilated.input", x, [=](const V& v) { return conv2d(v, v.graph().constant(w), V(), spec); });
    s.unary("conv2d.dilated.weight", w, [=](const V& v) { return conv2d(v.graph().constant(x), v, V(), spec); });
  }
  {
    auto x = random_tensor({3, 2, 3, 3}, rng), gamma = random_tensor({2}, rng), beta = random_tensor({2}, rng);
    auto bn = [](const V& in, const V& ga, const V& be) {
      BatchNormState<D> state(2);
      return batchnorm2d(in, ga, be, state, NormMode::kTrain);
    };
    s.unary("batchnorm2d.input", x, [=](const V& v) {
      G& g = v.graph();
      return bn(v, g.constant(gamma), g.constant(beta));
    });
    s.unary("batchnorm2d.gamma", gamma, [=](const V& v) {
      G& g = v.graph();
      return bn(g.constant(x), v, g.constant(beta));
    });
    s.unary("batchnorm2d.beta", beta, [=](const V& v) {
      G& g = v.graph();
      return bn(g.constant(x), g.constant(gamma), v);
    });
  }
  s.unary("maxpool2d", distinct_tensor({2, 2, 6, 6}, rng), [](const V& v) { return maxpool2d(v, 3, 2, 1); });
  s.unary("bilinear_upsample2x", random_tensor({1, 2, 3, 4}, rng), [](const V& v) { return bilinear_upsample2x(v); });
  {
    auto other = random_tensor({2, 2, 3, 3}, rng);
    s.unary("concat_slice", random_tensor({2, 3, 3, 3}, rng), [=](const V& v) {
      V cat = concat_channels<D>({v.graph().constant(other), v});
      return slice_channels(cat, 1, 3);
    });
  }
  s.unary("relu", random_tensor({2, 3, 4}, rng), [](const V& v) { return relu(v); });
  s.unary("sigmoid", random_tensor({2, 3, 4}, rng), [](const V& v) { return sigmoid(v); });
  s.unary("gelu", random_tensor({2, 3, 4}, rng), [](const V& v) { return gelu(v); });
  {
    auto a = random_tensor({2, 3, 4}, rng);
    s.unary("add.broadcast", random_tensor({3, 4}, rng), [=](const V& v) { return add(v.graph().constant(a), v); });
    s.unary("mul", random_tensor({2, 3, 4}, rng), [=](const V& v) { return mul(v, mul(v, v.graph().constant(a))); });
  }
  s.unary("scale", random_tensor({5}, rng), [](const V& v) { return scale(v, -2.5); });
  s.check("mean", random_tensor({2, 5}, rng), [](G&, const V& v) { return mean(mul(v, v)); });
  {
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({4, 5}, rng);
    s.unary("matmul.left", a, [=](const V& v) { return matmul(v, v.graph().constant(b)); });
    s.unary("matmul.right", b, [=](const V& v) { return matmul(v.graph().constant(a), v); });
  }
  s.unary("softmax.last", random_tensor({2, 3, 5}, rng), [](const V& v) { return softmax(v, 2); });
  s.unary("softmax.middle", random_tensor({2, 3, 5}, rng), [](const V& v) { return softmax(v, 1); });
  {
    auto x = random_tensor({2, 3, 6}, rng), gamma = random_tensor({6}, rng), beta = random_tensor({6}, rng);
    s.unary("layernorm.input", x, [=](const V& v) {
      G& g = v.graph();
      return layernorm(v, g.constant(gamma), g.constant(beta));
    });
    s.unary("layernorm.gamma", gamma, [=](const V& v) {
      G& g = v.graph();
      return layernorm(g.constant(x), v, g.constant(beta));
    });
    s.unary("layernorm.beta", beta, [=](const V& v) {
      G& g = v.graph();
      return layernorm(g.constant(x), g.constant(gamma), v);
    });
  }
  s.unary("permute_reshape", random_tensor({2, 3, 4}, rng),
          [](const V& v) { return reshape(permute(v, {2, 0, 1}), {4, 6}); });
  {
    Tensor<D> pred({2, 1, 4, 4}), target({2, 1, 4, 4});
    for (auto& p : pred.data()) p = rng.uniform(0.05, 0.95);
    for (auto& t : target.data()) t = rng.uniform() < 0.4 ? 1.0 : 0.0;
    s.check("bce_dice_loss", pred, [=](G& g, const V& v) { return bce_dice_loss(v, g.constant(target)); });
  }
}

// A block under test: layout, input shapes and a forward pass.
struct BlockCase {
  std::string name;
  Layout layout;
  std::vector<Shape> inputs;
  std::function<V(ForwardContext<D>&, const std::vector<V>&)> forward;
  std::vector<std::string> params;  // parameters to check besides the inputs
};

void run_block(Suite& s, const BlockCase& block) {
  auto store = std::make_shared<ParameterStore<D>>(init_parameters<D>(block.layout, s.rng.next_u64()));
  // Perturb zero-initialized tensors so every path carries signal.
  for (const auto& name : store->names()) {
    for (auto& v : store->at(name).data()) v += 0.1 * s.rng.uniform(-1.0, 1.0);
  }
  std::vector<Tensor<D>> inputs;
  for (const auto& shape : block.inputs) inputs.push_back(random_tensor(shape, s.rng));

  // Program with slot `slot` as the variable: input index, or parameter name.
  auto program = [&, store](int input_slot, const std::string& param) -> ScalarProgram {
    const std::uint64_t seed = s.weight_seed++;
    return [=, forward = block.forward](G& g, const V& x) {
      ForwardContext<D> ctx(g, *store, NormMode::kTrain);
      std::vector<V> vars;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        vars.push_back(static_cast<int>(i) == input_slot ? x : g.constant(inputs[i]));
      }
      if (!param.empty()) ctx.bind(param, x);
      return weighted_sum(forward(ctx, vars), seed);
    };
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    s.check(block.name + ".input" + (inputs.size() > 1 ? std::to_string(i) : ""), inputs[i],
            program(static_cast<int>(i), ""));
  }
  for (const auto& name : block.params) s.check(block.name + ":" + name, store->at(name), program(-1, name));
}

void block_cases(Suite& s) {
  run_block(s, {"conv_bn", conv_bn_layout("b", 3, 4, 3), {{2, 3, 5, 5}},
                [](ForwardContext<D>& c, const std::vector<V>& in) {
                  return conv_bn(c, "b", in[0], ConvSpec::same(3), true);
                },
                {"b.conv.weight", "b.bn.weight", "b.bn.bias"}});
  run_block(s, {"residual_block", residual_block_layout("r", 3, 4), {{2, 3, 4, 4}},
                [](ForwardContext<D>& c, const std::vector<V>& in) { return residual_block(c, "r", in[0], 4); },
                {"r.conv1.conv.weight", "r.conv2.bn.weight", "r.shortcut.conv.weight"}});
  run_block(s, {"bottleneck_block", bottleneck_block_layout("k", 4, 8, 2), {{2, 4, 6, 6}},
                [](ForwardContext<D>& c, const std::vector<V>& in) { return bottleneck_block(c, "k", in[0], 8, 2); },
                {"k.conv2.conv.weight", "k.conv3.bn.bias", "k.shortcut.conv.weight"}});
  run_block(s, {"multi_head_attention", transformer_layout("t", 8, 5, 2), {{2, 5, 8}},
                [](ForwardContext<D>& c, const std::vector<V>& in) {
                  return multi_head_attention(c, "t.attn", in[0], 2);
                },
                {"t.attn.q.weight", "t.attn.k.weight", "t.attn.v.bias", "t.attn.o.weight"}});
  {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.heads = 2;
    cfg.ffn_ratio = 2;
    run_block(s, {"transformer_encoder_block", transformer_layout("t", 8, 9, 2), {{2, 8, 3, 3}},
                  [cfg](ForwardContext<D>& c, const std::vector<V>& in) {
                    return transformer_encoder_block(c, "t", cfg, in[0]);
                  },
                  {"t.pos_embedding", "t.ln1.weight", "t.attn.q.weight", "t.ffn.fc1.weight", "t.ffn.fc2.bias"}});
  }
  // 10x10 so the dilation-9 taps reach real pixels.
  run_block(s, {"dilated_conv_block", dilated_conv_block_layout("d", 2), {{1, 2, 10, 10}},
                [](ForwardContext<D>& c, const std::vector<V>& in) { return dilated_conv_block(c, "d", in[0]); },
                {"d.branch4.conv.weight", "d.fuse.conv.weight"}});
  run_block(s, {"decoder_block", decoder_block_layout("u", 4, 2, 3), {{2, 4, 2, 2}, {2, 2, 4, 4}},
                [](ForwardContext<D>& c, const std::vector<V>& in) { return decoder_block(c, "u", in[0], in[1], 3); },
                {"u.res1.conv1.conv.weight", "u.res2.conv2.bn.weight"}});
  run_block(s, {"segmentation_head", segmentation_head_layout("h", 3), {{2, 3, 4, 4}},
                [](ForwardContext<D>& c, const std::vector<V>& in) { return segmentation_head(c, "h", in[0]); },
                {"h.conv.weight", "h.conv.bias"}});
}

void model_cases(Suite& s) {
  const ModelConfig cfg = ModelConfig::tiny();
  const TransResUNet<D> model(cfg);
  const std::int64_t size = cfg.input_size;
  Tensor<D> image({2, 3, size, size}), mask({2, 1, size, size});
  std::shared_ptr<ParameterStore<D>> store;
  // The loss gradient passes straight through the probability clamp, so it
  // only matches finite differences where no prediction reaches the clamp.
  // Redraw until every prediction keeps a margin.
  for (int attempt = 0;; ++attempt) {
    store = std::make_shared<ParameterStore<D>>(model.init(s.rng.next_u64()));
    for (const auto& name : store->names()) {
      for (auto& v : store->at(name).data()) v += 0.01 * s.rng.uniform(-1.0, 1.0);
    }
    for (auto& v : image.data()) v = s.rng.uniform();
    G g;
    g.set_grad_enabled(false);
    ParameterStore<D> scratch = *store;
    ForwardContext<D> ctx(g, scratch, NormMode::kTrain);
    const Tensor<D>& p = model.forward(ctx, g.constant(image)).probabilities.value();
    const auto [lo, hi] = std::minmax_element(p.data().begin(), p.data().end());
    if ((*lo > 1e3 * kProbClamp && *hi < 1.0 - 1e3 * kProbClamp) || attempt == 8) break;
  }
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t y = 0; y < size; ++y) {
      for (std::int64_t x = 0; x < size; ++x) {
        const double dy = y - size / 2.0 + 4.0 * n, dx = x - size / 2.0;
        mask[(n * size + y) * size + x] = dy * dy + dx * dx < size * size / 10.0 ? 1.0 : 0.0;
      }
    }
  }

  std::vector<std::string> names = store->names();
  s.rng.shuffle(names);
  names.resize(std::min<std::size_t>(names.size(), kModelCoordinates));
  for (const auto& name : names) {
    const std::int64_t coord = static_cast<std::int64_t>(s.rng.below(static_cast<std::uint64_t>(store->at(name).numel())));
    const std::vector<std::int64_t> coords{coord};
    s.check("model:" + name, store->at(name),
            [=, &model](G& g, const V& x) {
              ForwardContext<D> ctx(g, *store, NormMode::kTrain);
              ctx.bind(name, x);
              const auto out = model.forward(ctx, g.constant(image));
              return bce_dice_loss(out.probabilities, g.constant(mask));
            },
            coords);
  }
}

}  // namespace

GradScope parse_grad_scope(const std::string& text) {
  if (text == "primitive") return GradScope::kPrimitive;
  if (text == "block") return GradScope::kBlock;
  if (text == "model") return GradScope::kModel;
  throw ConfigError("scope must be primitive, block or model, got '" + text + "'");
}

const char* grad_scope_name(GradScope scope) {
  switch (scope) {
    case GradScope::kPrimitive: return "primitive";
    case GradScope::kBlock: return "block";
    case GradScope::kModel: return "model";
  }
  return "?";
}

std::vector<GradCase> run_grad_suite(GradScope scope, std::uint64_t seed) {
  Suite s{{}, Rng(seed), seed ^ 0xA5A5A5A5ULL, kPrimitiveTolerance};
  switch (scope) {
    case GradScope::kPrimitive:
      primitive_cases(s);
      break;
    case GradScope::kBlock:
      s.tolerance = kBlockTolerance;
      s.freeze = true;
      block_cases(s);
      break;
    case GradScope::kModel:
      s.tolerance = kModelTolerance;
      s.freeze = true;
      model_cases(s);
      break;
  }
  return std::move(s.cases);
}

}  // namespace trunet
