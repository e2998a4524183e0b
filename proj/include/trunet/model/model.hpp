#pragma once

#include <array>
#include <cstdint>

#include "trunet/model/blocks.hpp"

namespace trunet {

template <typename T>
struct ModelOutput {
  Var<T> probabilities;  // (N, 1, S, S)
  Var<T> bottleneck;
  Var<T> bridge;         // decoder 1 input
  std::array<Var<T>, 4> decoder;
};

/// Encoder, transformer / dilated-conv bridge, four decoder blocks and the
/// sigmoid head.
template <typename T>
class TransResUNet {
 public:
  explicit TransResUNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }

  ParameterStore<T> init(std::uint64_t seed) const { return init_parameters<T>(layout_, seed); }

  ModelOutput<T> forward(ForwardContext<T>& ctx, const Var<T>& image) const;

 private:
  ModelConfig config_;
  Layout layout_;
};

Layout model_layout(const ModelConfig& config);

// Trainable scalar count of a configuration.
std::int64_t param_count(const ModelConfig& config);

extern template class TransResUNet<float>;
extern template class TransResUNet<double>;

}  // namespace trunet
