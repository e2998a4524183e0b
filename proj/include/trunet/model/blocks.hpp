#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "trunet/autodiff.hpp"
#include "trunet/model/config.hpp"
#include "trunet/model/params.hpp"

namespace trunet {

/// Binds store tensors into one graph. Each parameter becomes a single leaf,
/// so fan-out accumulates into one gradient.
template <typename T>
class ForwardContext {
 public:
  ForwardContext(Graph<T>& graph, ParameterStore<T>& store, NormMode mode)
      : graph_(graph), store_(store), mode_(mode) {}

  Graph<T>& graph() { return graph_; }
  NormMode mode() const { return mode_; }
  ParameterStore<T>& store() { return store_; }

  Var<T> param(const std::string& name);
  // Makes param(name) return `v` instead of the store tensor; the shapes must
  // match. Must precede the first param(name) call.
  void bind(const std::string& name, const Var<T>& v);
  BatchNormState<T>& batchnorm_state(const std::string& name) { return store_.batchnorm(name); }

  const std::unordered_map<std::string, Var<T>>& bound() const { return bound_; }

  // Gradients of every store parameter after graph().backward(); zeros for
  // parameters the forward pass did not touch.
  std::unordered_map<std::string, Tensor<T>> gradients() const;

 private:
  Graph<T>& graph_;
  ParameterStore<T>& store_;
  NormMode mode_;
  std::unordered_map<std::string, Var<T>> bound_;
};

// Shape-only description of the parameters a block owns.
struct Layout {
  std::vector<ParamSpec> params;
  std::vector<BatchNormSpec> batchnorms;

  std::int64_t scalar_count() const;
  void append(const Layout& other);
};

template <typename T>
struct EncoderFeatures {
  // s0 input image (S), s1 stem (S/2), s2 stage 1 (S/4), s3 stage 2 (S/8).
  std::array<Var<T>, 4> skips;
  Var<T> bottleneck;  // stage 3, S/16
};

// conv (no bias) -> batch norm [-> relu]
template <typename T>
Var<T> conv_bn(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
               const ConvSpec& spec, bool apply_relu);
Layout conv_bn_layout(const std::string& prefix, std::int64_t cin, std::int64_t cout, int k);

/// conv3x3-BN-ReLU-conv3x3-BN plus identity (1x1 conv + BN projection when
/// the channel count changes), then ReLU.
template <typename T>
Var<T> residual_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
                      std::int64_t c_out);
Layout residual_block_layout(const std::string& prefix, std::int64_t cin, std::int64_t cout);

// ResNet v1.5 bottleneck: 1x1 -> 3x3 (strided) -> 1x1, projection shortcut
// when shape changes.
template <typename T>
Var<T> bottleneck_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
                        std::int64_t c_out, int stride);
Layout bottleneck_block_layout(const std::string& prefix, std::int64_t cin, std::int64_t cout,
                               int stride);

template <typename T>
EncoderFeatures<T> encoder_forward(ForwardContext<T>& ctx, const ModelConfig& config,
                                   const Var<T>& image);
Layout encoder_layout(const ModelConfig& config);

template <typename T>
Var<T> transformer_encoder_block(ForwardContext<T>& ctx, const std::string& prefix,
                                 const ModelConfig& config, const Var<T>& x);
Layout transformer_layout(const std::string& prefix, std::int64_t channels, std::int64_t tokens,
                          int ffn_ratio);

// Multi-head scaled dot-product self-attention over (N, n, C) tokens, with
// Q/K/V/O projections from `prefix`. Optionally returns the attention
// weights (N, heads, n, n).
template <typename T>
Var<T> multi_head_attention(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& tokens,
                            int heads, Var<T>* weights = nullptr);

inline constexpr std::array<int, 4> kDilationRates{1, 3, 6, 9};

template <typename T>
Var<T> dilated_conv_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x);
Layout dilated_conv_block_layout(const std::string& prefix, std::int64_t channels);

template <typename T>
Var<T> decoder_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x,
                     const Var<T>& skip, std::int64_t c_out);
Layout decoder_block_layout(const std::string& prefix, std::int64_t cin, std::int64_t c_skip,
                            std::int64_t cout);

// 1x1 conv to one channel, then sigmoid.
template <typename T>
Var<T> segmentation_head(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x);
Layout segmentation_head_layout(const std::string& prefix, std::int64_t cin);

// Creates a store with every layout entry initialized; batch-norm running
// statistics start at mean 0, variance 1.
template <typename T>
ParameterStore<T> init_parameters(const Layout& layout, std::uint64_t seed);

}  // namespace trunet
