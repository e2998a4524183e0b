#pragma once

#include <array>

#include "trunet/tensor.hpp"

namespace trunet {

// Blue -> cyan -> green -> yellow -> red for t in [0, 1].
std::array<float, 3> heat_color(double t);

/// Channel mean of a (C,h,w) feature map, min-max normalized, colored and
/// resized to (3, out_size, out_size). A constant map comes out all blue.
template <typename T>
Tensor<float> activation_heatmap(const Tensor<T>& features, int out_size);

}  // namespace trunet
