#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "trunet/model/params.hpp"

namespace trunet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  std::unordered_map<std::string, Tensor<T>> first_moment;
  std::unordered_map<std::string, Tensor<T>> second_moment;
  std::int64_t step = 0;
};


// Bias-corrected Adam update of every store parameter, in place. `grads`
// must hold a tensor of matching shape for each parameter name.
template <typename T>
void adam_step(ParameterStore<T>& params, const std::unordered_map<std::string, Tensor<T>>& grads,
               OptimizerState<T>& state, const AdamOptions& options);

}  // namespace trunet
