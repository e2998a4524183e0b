#include "trunet/model/blocks.hpp"

#include <cmath>

#include "trunet/errors.hpp"
#include "trunet/rng.hpp"

namespace trunet {

template <typename T>
Var<T> ForwardContext<T>::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var<T> v = graph_.leaf_ref(store_.at(name));
  bound_.emplace(name, v);
  return v;
}

template <typename T>
void ForwardContext<T>::bind(const std::string& name, const Var<T>& v) {
  if (v.shape() != store_.at(name).shape()) {
    throw ShapeError("bind " + name + ": shape " + shape_str(v.shape()) + " vs stored " +
                     shape_str(store_.at(name).shape()));
  }
  if (!bound_.emplace(name, v).second) throw ShapeError("bind " + name + ": parameter already bound");
}

template <typename T>
std::unordered_map<std::string, Tensor<T>> ForwardContext<T>::gradients() const {
  std::unordered_map<std::string, Tensor<T>> out;
  for (const auto& name : store_.names()) {
    auto it = bound_.find(name);
    out.emplace(name, it == bound_.end() ? Tensor<T>(store_.at(name).shape()) : graph_.grad(it->second));
  }
  return out;
}

std::int64_t Layout::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += shape_numel(p.shape);
  return n;
}

void Layout::append(const Layout& other) {
  params.insert(params.end(), other.params.begin(), other.params.end());
  batchnorms.insert(batchnorms.end(), other.batchnorms.begin(), other.batchnorms.end());
}

namespace {

std::string join(const std::string& prefix, const std::string& leaf) { return prefix + "." + leaf; }

Layout linear_layout(const std::string& prefix, std::int64_t in, std::int64_t out, bool bias) {
  Layout l;
  l.params.push_back({join(prefix, "weight"), {in, out}, InitKind::kUniformFanIn, in});
  if (bias) l.params.push_back({join(prefix, "bias"), {out}, InitKind::kZeros, in});
  return l;
}

Layout layernorm_layout(const std::string& prefix, std::int64_t d) {
  Layout l;
  l.params.push_back({join(prefix, "weight"), {d}, InitKind::kOnes, d});
  l.params.push_back({join(prefix, "bias"), {d}, InitKind::kZeros, d});
  return l;
}

// x (.., in) @ weight (in, out) [+ bias]
template <typename T>
Var<T> linear(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x, bool bias) {
  Var<T> y = matmul(x, ctx.param(join(prefix, "weight")));
  if (bias) y = add(y, ctx.param(join(prefix, "bias")));
  return y;
}

}  // namespace

template <typename T>
Var<T> conv_bn(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
               const ConvSpec& spec, bool apply_relu) {
  Var<T> y = conv2d(x, ctx.param(join(prefix, "conv.weight")), Var<T>(), spec);
  y = batchnorm2d(y, ctx.param(join(prefix, "bn.weight")), ctx.param(join(prefix, "bn.bias")),
                  ctx.batchnorm_state(join(prefix, "bn")), ctx.mode());
  return apply_relu ? relu(y) : y;
}

Layout conv_bn_layout(const std::string& prefix, std::int64_t cin, std::int64_t cout, int k) {
  Layout l;
  l.params.push_back({join(prefix, "conv.weight"), {cout, cin, k, k}, InitKind::kHeNormal, cin * k * k});
  l.params.push_back({join(prefix, "bn.weight"), {cout}, InitKind::kOnes, 1});
  l.params.push_back({join(prefix, "bn.bias"), {cout}, InitKind::kZeros, 1});
  l.batchnorms.push_back({join(prefix, "bn"), cout});
  return l;
}

template <typename T>
Var<T> residual_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
                      std::int64_t c_out) {
  const std::int64_t cin = x.value().dim(1);
  Var<T> h = conv_bn(ctx, join(prefix, "conv1"), x, ConvSpec::same(3), true);
  h = conv_bn(ctx, join(prefix, "conv2"), h, ConvSpec::same(3), false);
  Var<T> shortcut = cin == c_out ? x : conv_bn(ctx, join(prefix, "shortcut"), x, ConvSpec::same(1), false);
  return relu(add(h, shortcut));
}

Layout residual_block_layout(const std::string& prefix, std::int64_t cin, std::int64_t cout) {
  Layout l = conv_bn_layout(join(prefix, "conv1"), cin, cout, 3);
  l.append(conv_bn_layout(join(prefix, "conv2"), cout, cout, 3));
  if (cin != cout) l.append(conv_bn_layout(join(prefix, "shortcut"), cin, cout, 1));
  return l;
}

namespace {

std::int64_t bottleneck_mid(std::int64_t cout) { return std::max<std::int64_t>(1, cout / 4); }

}  // namespace

template <typename T>
Var<T> bottleneck_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
                        std::int64_t c_out, int stride) {
  const std::int64_t cin = x.value().dim(1);
  Var<T> h = conv_bn(ctx, join(prefix, "conv1"), x, ConvSpec::same(1), true);
  h = conv_bn(ctx, join(prefix, "conv2"), h, ConvSpec::square(3, stride, 1), true);
  h = conv_bn(ctx, join(prefix, "conv3"), h, ConvSpec::same(1), false);
  Var<T> shortcut = (cin == c_out && stride == 1)
                        ? x
                        : conv_bn(ctx, join(prefix, "shortcut"), x, ConvSpec::square(1, stride, 0), false);
  return relu(add(h, shortcut));
}

Layout bottleneck_block_layout(const std::string& prefix, std::int64_t cin, std::int64_t cout,
                               int stride) {
  const std::int64_t mid = bottleneck_mid(cout);
  Layout l = conv_bn_layout(join(prefix, "conv1"), cin, mid, 1);
  l.append(conv_bn_layout(join(prefix, "conv2"), mid, mid, 3));
  l.append(conv_bn_layout(join(prefix, "conv3"), mid, cout, 1));
  if (cin != cout || stride != 1) l.append(conv_bn_layout(join(prefix, "shortcut"), cin, cout, 1));
  return l;
}

namespace {

constexpr std::array<int, 3> kStageStrides{1, 2, 2};

std::string stage_block_name(int stage, int block) {
  return "encoder.stage" + std::to_string(stage + 1) + ".block" + std::to_string(block + 1);
}

}  // namespace

template <typename T>
EncoderFeatures<T> encoder_forward(ForwardContext<T>& ctx, const ModelConfig& config,
                                   const Var<T>& image) {
  const Shape& s = image.value().shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != config.input_size || s[3] != config.input_size) {
    throw ShapeError("encoder: expected input (N,3," + std::to_string(config.input_size) + "," +
                     std::to_string(config.input_size) + "), got " + shape_str(s));
  }
  EncoderFeatures<T> out;
  out.skips[0] = image;
  Var<T> x = conv_bn(ctx, "encoder.stem", image, ConvSpec::square(7, 2, 3), true);
  out.skips[1] = x;
  x = maxpool2d(x, 3, 2, 1);
  const auto channels = config.stage_channels();
  for (int stage = 0; stage < 3; ++stage) {
    for (int b = 0; b < config.stage_depths[stage]; ++b) {
      x = bottleneck_block(ctx, stage_block_name(stage, b), x, channels[stage],
                           b == 0 ? kStageStrides[stage] : 1);
    }
    if (stage < 2) out.skips[stage + 2] = x;
  }
  out.bottleneck = x;
  return out;
}

Layout encoder_layout(const ModelConfig& config) {
  Layout l = conv_bn_layout("encoder.stem", 3, config.stem_channels(), 7);
  std::int64_t cin = config.stem_channels();
  const auto channels = config.stage_channels();
  for (int stage = 0; stage < 3; ++stage) {
    for (int b = 0; b < config.stage_depths[stage]; ++b) {
      l.append(bottleneck_block_layout(stage_block_name(stage, b), cin, channels[stage],
                                       b == 0 ? kStageStrides[stage] : 1));
      cin = channels[stage];
    }
  }
  return l;
}

template <typename T>
Var<T> multi_head_attention(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& tokens,
                            int heads, Var<T>* weights) {
  const Shape& s = tokens.value().shape();
  if (s.size() != 3) throw ShapeError("attention: expected (N, n, C) tokens, got " + shape_str(s));
  const std::int64_t n = s[0], len = s[1], c = s[2];
  if (heads < 1 || c % heads != 0) {
    throw ConfigError("attention: heads (" + std::to_string(heads) + ") must divide width " + std::to_string(c));
  }
  const std::int64_t dh = c / heads;
  auto split = [&](const Var<T>& t, const std::vector<int>& perm) {
    return permute(reshape(t, {n, len, heads, dh}), perm);
  };
  Var<T> q = split(linear(ctx, join(prefix, "q"), tokens, true), {0, 2, 1, 3});   // (N,H,n,dh)
  Var<T> kt = split(linear(ctx, join(prefix, "k"), tokens, false), {0, 2, 3, 1});  // (N,H,dh,n)
  Var<T> v = split(linear(ctx, join(prefix, "v"), tokens, true), {0, 2, 1, 3});
  Var<T> scores = scale(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var<T> attn = softmax(scores, -1);
  if (weights) *weights = attn;
  Var<T> mixed = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {n, len, c});
  return linear(ctx, join(prefix, "o"), mixed, true);
}

template <typename T>
Var<T> transformer_encoder_block(ForwardContext<T>& ctx, const std::string& prefix,
                                 const ModelConfig& config, const Var<T>& x) {
  const Shape& s = x.value().shape();
  if (s.size() != 4) throw ShapeError("transformer: expected (N,C,h,w), got " + shape_str(s));
  const std::int64_t n = s[0], c = s[1], len = s[2] * s[3];
  if (c % config.heads != 0) {
    throw ConfigError("transformer: heads (" + std::to_string(config.heads) + ") must divide " +
                      std::to_string(c) + " channels");
  }
  if (len > config.max_tokens) {
    throw ConfigError("transformer: " + std::to_string(len) + " tokens exceed max_tokens=" +
                      std::to_string(config.max_tokens) + "; lower input_size");
  }
  Var<T> t = permute(reshape(x, {n, c, len}), {0, 2, 1});  // (N, n, C)
  t = add(t, ctx.param(join(prefix, "pos_embedding")));
  Var<T> normed = layernorm(t, ctx.param(join(prefix, "ln1.weight")), ctx.param(join(prefix, "ln1.bias")));
  t = add(t, multi_head_attention(ctx, join(prefix, "attn"), normed, config.heads));
  normed = layernorm(t, ctx.param(join(prefix, "ln2.weight")), ctx.param(join(prefix, "ln2.bias")));
  Var<T> hidden = gelu(linear(ctx, join(prefix, "ffn.fc1"), normed, true));
  t = add(t, linear(ctx, join(prefix, "ffn.fc2"), hidden, true));
  return reshape(permute(t, {0, 2, 1}), s);
}

Layout transformer_layout(const std::string& prefix, std::int64_t c, std::int64_t tokens,
                          int ffn_ratio) {
  Layout l;
  l.params.push_back({join(prefix, "pos_embedding"), {tokens, c}, InitKind::kZeros, c});
  l.append(layernorm_layout(join(prefix, "ln1"), c));
  // No key bias: softmax is invariant to it, so it would never train.
  l.append(linear_layout(join(prefix, "attn.q"), c, c, true));
  l.append(linear_layout(join(prefix, "attn.k"), c, c, false));
  l.append(linear_layout(join(prefix, "attn.v"), c, c, true));
  l.append(linear_layout(join(prefix, "attn.o"), c, c, true));
  l.append(layernorm_layout(join(prefix, "ln2"), c));
  l.append(linear_layout(join(prefix, "ffn.fc1"), c, c * ffn_ratio, true));
  l.append(linear_layout(join(prefix, "ffn.fc2"), c * ffn_ratio, c, true));
  return l;
}

template <typename T>
Var<T> dilated_conv_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x) {
  std::vector<Var<T>> branches;
  for (std::size_t i = 0; i < kDilationRates.size(); ++i) {
    branches.push_back(conv_bn(ctx, join(prefix, "branch" + std::to_string(i + 1)), x,
                               ConvSpec::same(3, kDilationRates[i]), true));
  }
  return conv_bn(ctx, join(prefix, "fuse"), concat_channels(branches), ConvSpec::same(1), true);
}

Layout dilated_conv_block_layout(const std::string& prefix, std::int64_t c) {
  Layout l;
  for (std::size_t i = 0; i < kDilationRates.size(); ++i) {
    l.append(conv_bn_layout(join(prefix, "branch" + std::to_string(i + 1)), c, c, 3));
  }
  l.append(conv_bn_layout(join(prefix, "fuse"), 4 * c, c, 1));
  return l;
}

template <typename T>
Var<T> decoder_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
                     const Var<T>& skip, std::int64_t c_out) {
  Var<T> up = bilinear_upsample2x(x);
  const Shape& a = up.value().shape();
  const Shape& b = skip.value().shape();
  if (b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3]) {
    throw ShapeError("decoder: upsampled input " + shape_str(a) + " does not match skip " + shape_str(b));
  }
  Var<T> h = concat_channels<T>({up, skip});
  h = residual_block(ctx, join(prefix, "res1"), h, c_out);
  return residual_block(ctx, join(prefix, "res2"), h, c_out);
}

Layout decoder_block_layout(const std::string& prefix, std::int64_t cin, std::int64_t c_skip,
                            std::int64_t cout) {
  Layout l = residual_block_layout(join(prefix, "res1"), cin + c_skip, cout);
  l.append(residual_block_layout(join(prefix, "res2"), cout, cout));
  return l;
}

template <typename T>
Var<T> segmentation_head(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x) {
  Var<T> logits = conv2d(x, ctx.param(join(prefix, "conv.weight")), ctx.param(join(prefix, "conv.bias")),
                         ConvSpec::same(1));
  return sigmoid(logits);
}

Layout segmentation_head_layout(const std::string& prefix, std::int64_t cin) {
  Layout l;
  l.params.push_back({join(prefix, "conv.weight"), {1, cin, 1, 1}, InitKind::kHeNormal, cin});
  l.params.push_back({join(prefix, "conv.bias"), {1}, InitKind::kZeros, cin});
  return l;
}

template <typename T>
ParameterStore<T> init_parameters(const Layout& layout, std::uint64_t seed) {
  Rng rng(seed);
  ParameterStore<T> store;
  for (const auto& spec : layout.params) {
    Tensor<T> t(spec.shape);
    const double fan_in = static_cast<double>(std::max<std::int64_t>(1, spec.fan_in));
    switch (spec.init) {
      case InitKind::kHeNormal: {
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& v : t.data()) v = static_cast<T>(sd * rng.normal());
        break;
      }
      case InitKind::kUniformFanIn: {
        const double bound = 1.0 / std::sqrt(fan_in);
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case InitKind::kZeros:
        break;
      case InitKind::kOnes:
        t.fill(T(1));
        break;
    }
    store.add(spec.name, std::move(t));
  }
  for (const auto& bn : layout.batchnorms) {
    BatchNormState<T> state(bn.channels);
    state.initialize_identity();
    store.add_batchnorm(bn.name, std::move(state));
  }
  return store;
}

#define TRUNET_INSTANTIATE(T)                                                                       \
  template class ForwardContext<T>;                                                                \
  template Var<T> conv_bn<T>(ForwardContext<T>&, const std::string&, const Var<T>&,                \
                             const ConvSpec&, bool);                                               \
  template Var<T> residual_block<T>(ForwardContext<T>&, const std::string&, const Var<T>&,         \
                                    std::int64_t);                                                 \
  template Var<T> bottleneck_block<T>(ForwardContext<T>&, const std::string&, const Var<T>&,       \
                                      std::int64_t, int);                                          \
  template EncoderFeatures<T> encoder_forward<T>(ForwardContext<T>&, const ModelConfig&,           \
                                                 const Var<T>&);                                   \
  template Var<T> multi_head_attention<T>(ForwardContext<T>&, const std::string&, const Var<T>&,   \
                                          int, Var<T>*);                                           \
  template Var<T> transformer_encoder_block<T>(ForwardContext<T>&, const std::string&,             \
                                               const ModelConfig&, const Var<T>&);                 \
  template Var<T> dilated_conv_block<T>(ForwardContext<T>&, const std::string&, const Var<T>&);    \
  template Var<T> decoder_block<T>(ForwardContext<T>&, const std::string&, const Var<T>&,          \
                                   const Var<T>&, std::int64_t);                                   \
  template Var<T> segmentation_head<T>(ForwardContext<T>&, const std::string&, const Var<T>&);     \
  template ParameterStore<T> init_parameters<T>(const Layout&, std::uint64_t);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)
#undef TRUNET_INSTANTIATE

}  // namespace trunet
