#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "trunet/ops.hpp"
#include "trunet/tensor.hpp"

namespace trunet {

enum class InitKind {
  kHeNormal,      // N(0, 2 / fan_in), convolutions
  kUniformFanIn,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), linear projections
  kZeros,
  kOnes,
};

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kZeros;
  std::int64_t fan_in = 1;
};

struct BatchNormSpec {
  std::string name;
  std::int64_t channels = 0;
};

/// Named trainable tensors in declaration order, plus batch-norm running
/// statistics keyed by layer name.
template <typename T>
class ParameterStore {
 public:
  void add(const std::string& name, Tensor<T> value);
  void add_batchnorm(const std::string& name, BatchNormState<T> state);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  bool contains_batchnorm(const std::string& name) const { return bn_index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  BatchNormState<T>& batchnorm(const std::string& name);
  const BatchNormState<T>& batchnorm(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& batchnorm_names() const { return bn_names_; }

  // Total trainable scalars.
  std::int64_t scalar_count() const;

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    for (std::size_t i = 0; i < bn_names_.size(); ++i) {
      BatchNormState<U> s;
      s.running_mean = bn_states_[i].running_mean.template cast<U>();
      s.running_var = bn_states_[i].running_var.template cast<U>();
      s.initialized = bn_states_[i].initialized;
      out.add_batchnorm(bn_names_[i], std::move(s));
    }
    return out;
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.names_ != b.names_ || a.values_ != b.values_ || a.bn_names_ != b.bn_names_) return false;
    for (std::size_t i = 0; i < a.bn_states_.size(); ++i) {
      if (!(a.bn_states_[i].running_mean == b.bn_states_[i].running_mean) ||
          !(a.bn_states_[i].running_var == b.bn_states_[i].running_var)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> bn_names_;
  std::vector<BatchNormState<T>> bn_states_;
  std::unordered_map<std::string, std::size_t> bn_index_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace trunet
