#pragma once

#include "trunet/tensor.hpp"

namespace trunet {

// Half-pixel-center bilinear resize of a (C,H,W) tensor; the same sampling
// rule as bilinear_upsample2x.
Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w);

// Nearest-neighbor resize of a (1,H,W) mask, re-binarized at 0.5.
Tensor<float> resize_mask(const Tensor<float>& mask, int out_h, int out_w);

}  // namespace trunet
