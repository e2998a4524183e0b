#include "trunet/train/adam.hpp"

#include <cmath>

#include "trunet/errors.hpp"

namespace trunet {

template <typename T>
void adam_step(ParameterStore<T>& params, const std::unordered_map<std::string, Tensor<T>>& grads,
               OptimizerState<T>& state, const AdamOptions& options) {
  for (const auto& name : params.names()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ShapeError("adam_step: no gradient for '" + name + "'");
    if (it->second.shape() != params.at(name).shape()) {
      throw ShapeError("adam_step: gradient " + shape_str(it->second.shape()) + " does not match '" +
                       name + "' " + shape_str(params.at(name).shape()));
    }
  }
  ++state.step;
  const double b1 = options.beta1, b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const auto& name : params.names()) {
    Tensor<T>& p = params.at(name);
    const Tensor<T>& g = grads.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, p.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(name, p.shape());
    Tensor<T>& m = m_it->second;
    Tensor<T>& v = v_it->second;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1 - b1) * gi;
      const double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = options.lr * (mi / c1) / (std::sqrt(vi / c2) + options.eps);
      p[i] = static_cast<T>(p[i] - update);
    }
  }
}

template void adam_step<float>(ParameterStore<float>&, const std::unordered_map<std::string, Tensor<float>>&,
                               OptimizerState<float>&, const AdamOptions&);
template void adam_step<double>(ParameterStore<double>&,
                                const std::unordered_map<std::string, Tensor<double>>&,
                                OptimizerState<double>&, const AdamOptions&);

}  // namespace trunet
