#pragma once

#include <cstdint>
#include <vector>

#include "trunet/autodiff.hpp"
#include "trunet/tensor.hpp"

namespace trunet {

/// Geometry of a 2-D convolution. Padding is zero padding, given per side.
struct ConvSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad_top = 0;
  int pad_bottom = 0;
  int pad_left = 0;
  int pad_right = 0;
  int dilation = 1;

  // k x k kernel whose output keeps the input size at stride 1.
  static ConvSpec same(int k, int dilation = 1, int stride = 1);
  static ConvSpec square(int k, int stride, int pad, int dilation = 1);

  std::int64_t out_h(std::int64_t in_h) const;
  std::int64_t out_w(std::int64_t in_w) const;
};

// floor((in + pad_lo + pad_hi - dilation*(k-1) - 1) / stride) + 1; may be < 1.
std::int64_t conv_output_extent(std::int64_t in, int kernel, int stride, int pad_lo, int pad_hi,
                                int dilation);

enum class ActivationKind { kRelu, kSigmoid, kGelu };
enum class NormMode { kTrain, kEval };

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kLayerNormEps = 1e-5;

/// Running statistics of a batch-norm layer. Eval mode refuses to use them
/// until they were produced by a train-mode pass or explicitly initialized.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  bool initialized = false;

  BatchNormState() = default;
  explicit BatchNormState(std::int64_t channels);

  // mean 0, variance 1.
  void initialize_identity();
};

// -- convolution / pooling / resampling ------------------------------------

// input (N,Cin,H,W), weight (Cout,Cin,kh,kw), bias (Cout) or invalid Var.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvSpec& spec);

template <typename T>
Var<T> batchnorm2d(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                   BatchNormState<T>& state, NormMode mode, double eps = kBatchNormEps);

template <typename T>
Var<T> maxpool2d(const Var<T>& input, int window, int stride, int pad = 0);

// Half-pixel-center bilinear 2x upsampling (align_corners = false).
template <typename T>
Var<T> bilinear_upsample2x(const Var<T>& input);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs);

// Channels [begin, begin + count) of an (N,C,H,W) tensor.
template <typename T>
Var<T> slice_channels(const Var<T>& input, std::int64_t begin, std::int64_t count);

// -- elementwise ----------------------------------------------------------

template <typename T>
Var<T> activation(const Var<T>& input, ActivationKind kind);

template <typename T>
Var<T> relu(const Var<T>& input) { return activation(input, ActivationKind::kRelu); }
template <typename T>
Var<T> sigmoid(const Var<T>& input) { return activation(input, ActivationKind::kSigmoid); }
template <typename T>
Var<T> gelu(const Var<T>& input) { return activation(input, ActivationKind::kGelu); }

// a + b where b's shape equals a's shape or a trailing suffix of it.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& input, double factor);

template <typename T>
Var<T> sum(const Var<T>& input);

template <typename T>
Var<T> mean(const Var<T>& input);

// -- linear algebra / shape -------------------------------------------------

// (..., m, k) x (..., k, n). Leading axes must match, or one side is rank 2
// and is broadcast over the other's leading axes.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> softmax(const Var<T>& input, int axis);

// Normalizes over the last axis.
template <typename T>
Var<T> layernorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                 double eps = kLayerNormEps);

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape);

// Output axis i is input axis perm[i].
template <typename T>
Var<T> permute(const Var<T>& input, const std::vector<int>& perm);

// Plain tensor helpers shared by ops, oracles and model code.
template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& input, const std::vector<int>& perm);

}  // namespace trunet
