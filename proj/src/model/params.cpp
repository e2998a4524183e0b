#include "trunet/model/params.hpp"

#include "trunet/errors.hpp"

namespace trunet {

template <typename T>
void ParameterStore<T>::add(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

template <typename T>
void ParameterStore<T>::add_batchnorm(const std::string& name, BatchNormState<T> state) {
  if (contains_batchnorm(name)) throw ConfigError("duplicate batch-norm name '" + name + "'");
  bn_index_.emplace(name, bn_names_.size());
  bn_names_.push_back(name);
  bn_states_.push_back(std::move(state));
}

template <typename T>
Tensor<T>& ParameterStore<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return values_[it->second];
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return values_[it->second];
}

template <typename T>
BatchNormState<T>& ParameterStore<T>::batchnorm(const std::string& name) {
  auto it = bn_index_.find(name);
  if (it == bn_index_.end()) throw ConfigError("unknown batch-norm layer '" + name + "'");
  return bn_states_[it->second];
}

template <typename T>
const BatchNormState<T>& ParameterStore<T>::batchnorm(const std::string& name) const {
  auto it = bn_index_.find(name);
  if (it == bn_index_.end()) throw ConfigError("unknown batch-norm layer '" + name + "'");
  return bn_states_[it->second];
}

template <typename T>
std::int64_t ParameterStore<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace trunet
