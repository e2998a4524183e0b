#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "trunet/tensor.hpp"

namespace trunet {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of primitive operations. Nodes are appended in evaluation order, so
/// ids are a topological order and backward() walks them once in reverse.
///
/// A graph is driven by one thread at a time.
template <typename T>
class Graph {
 public:
  // Called during backward() with the finished gradient of the node's output.
  // Implementations push contributions into their inputs via accumulate().
  using BackwardFn = std::function<void(Graph&, const Tensor<T>&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);

  // Trainable leaf that owns its value.
  Var<T> leaf(Tensor<T> value);

  // Trainable leaf reading external storage, which must outlive the graph
  // and stay unmodified until backward() has run.
  Var<T> leaf_ref(const Tensor<T>& value);

  // Appends an op result. `backward` is dropped when gradients are disabled
  // or no input requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward,
                std::string_view op);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward,
                std::string_view op);

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(const Var<T>& v) const { return node(v).requires_grad; }
  std::string_view op_name(const Var<T>& v) const { return node(v).op; }

  // Adds `contribution` into the gradient buffer of `v`. No-op when `v` does
  // not require a gradient.
  void accumulate(const Var<T>& v, const Tensor<T>& contribution);

  // Gradient buffer of `v`, allocated as zeros on first use.
  Tensor<T>& grad_buffer(const Var<T>& v);

  /// Reverse-mode sweep from a scalar (single element) node.
  void backward(const Var<T>& loss);

  // Gradient of `v` after backward(); zeros for nodes the loss never reached.
  Tensor<T> grad(const Var<T>& v) const;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Regime tracking: piecewise ops (relu, max-pool) attach the discrete
  // choices they made (active mask, argmax). Off by default.
  bool tracks_regime() const noexcept { return track_regime_; }
  void set_tracks_regime(bool track) noexcept { track_regime_ = track; }
  void set_regime(const Var<T>& v, std::vector<std::int64_t> choices) { node(v).regime = std::move(choices); }
  // Every tracked choice in node order.
  std::vector<std::int64_t> regime() const;

  // Regime replay: piecewise ops take their choices from `choices` (as
  // returned by regime() of an identically structured graph) instead of
  // deciding from their inputs, which makes the program smooth in its inputs.
  void replay_regime(std::vector<std::int64_t> choices);
  bool replaying() const noexcept { return replaying_; }
  // Next `count` replayed choices; throws ShapeError when they run out.
  std::vector<std::int64_t> take_replay(std::size_t count);

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
    std::string_view op;
    std::vector<std::int64_t> regime;

    const Tensor<T>& value() const { return external ? *external : owned; }
  };

  Node& node(const Var<T>& v);
  const Node& node(const Var<T>& v) const;
  Var<T> push(Node node);

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
  bool track_regime_ = false;
  bool replaying_ = false;
  std::vector<std::int64_t> replay_;
  std::size_t replay_pos_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

/// Disables gradient recording for the lifetime of the guard.
template <typename T>
class NoGradGuard {
 public:
  explicit NoGradGuard(Graph<T>& graph) : graph_(graph), previous_(graph.grad_enabled()) {
    graph_.set_grad_enabled(false);
  }
  ~NoGradGuard() { graph_.set_grad_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Graph<T>& graph_;
  bool previous_;
};

/// Test hook: while alive, every backward rule recorded under `op` receives
/// its output gradient multiplied by `factor`. Used to check that gradient
/// checks catch a wrong rule. Not thread-safe; one fault at a time.
class ScopedBackwardFault {
 public:
  ScopedBackwardFault(std::string op, double factor);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
  // Backward calls that were scaled so far.
  std::int64_t hits() const;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace trunet
