#pragma once

#include <string>
#include <vector>

#include "trunet/tensor.hpp"

namespace trunet {

/// Image (3,H,W) in [0,1] with its binary mask (1,H,W).
struct Sample {
  Tensor<float> image;
  Tensor<float> mask;
  std::string id;
};

// Throws DataError when sizes differ or the mask is not binary.
void validate_sample(const Sample& sample);

}  // namespace trunet
