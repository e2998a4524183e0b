#include "trunet/autodiff.hpp"

#include "trunet/errors.hpp"

namespace trunet {

template <typename T>
typename Graph<T>::Node& Graph<T>::node(const Var<T>& v) {
  if (v.valid() && &v.graph() != this) throw ShapeError("variable belongs to another graph");
  return nodes_.at(v.id());
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(const Var<T>& v) const {
  if (v.valid() && &v.graph() != this) throw ShapeError("variable belongs to another graph");
  return nodes_.at(v.id());
}

template <typename T>
Var<T> Graph<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_;
  n.is_leaf = true;
  n.op = "leaf";
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::leaf_ref(const Tensor<T>& value) {
  Node n;
  n.external = &value;
  n.requires_grad = grad_enabled_;
  n.is_leaf = true;
  n.op = "leaf";
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward,
                        std::string_view op) {
  Node n;
  n.owned = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (in.valid() && node(in).requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward,
                        std::string_view op) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward), op);
}

template <typename T>
const Tensor<T>& Graph<T>::value(std::size_t id) const {
  return nodes_.at(id).value();
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(const Var<T>& v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value().shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Graph<T>::accumulate(const Var<T>& v, const Tensor<T>& contribution) {
  if (!v.valid() || !node(v).requires_grad) return;
  grad_buffer(v) += contribution;
}

namespace {

struct BackwardFault {
  std::string op;
  double factor = 1.0;
  bool active = false;
  std::int64_t hits = 0;
};

BackwardFault& backward_fault() {
  static BackwardFault fault;
  return fault;
}

}  // namespace

ScopedBackwardFault::ScopedBackwardFault(std::string op, double factor) {
  backward_fault() = {std::move(op), factor, true, 0};
}

ScopedBackwardFault::~ScopedBackwardFault() { backward_fault() = {}; }

std::int64_t ScopedBackwardFault::hits() const { return backward_fault().hits; }

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
  Node& root = node(loss);
  if (root.value().numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(root.value().shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<T>();
  }
  grad_buffer(loss).fill(T(1));
  BackwardFault& fault = backward_fault();
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    // Deque storage keeps `g` in place while the callback touches other nodes.
    const Tensor<T>& g = n.grad;
    if (fault.active && n.op == fault.op) {
      ++fault.hits;
      Tensor<T> scaled = g;
      scaled *= static_cast<T>(fault.factor);
      n.backward(*this, scaled);
      continue;
    }
    n.backward(*this, g);
  }
}

template <typename T>
Tensor<T> Graph<T>::grad(const Var<T>& v) const {
  const Node& n = node(v);
  if (!n.has_grad) return Tensor<T>(n.value().shape());
  return n.grad;
}

template <typename T>
std::vector<std::int64_t> Graph<T>::regime() const {
  std::vector<std::int64_t> out;
  for (const auto& n : nodes_) out.insert(out.end(), n.regime.begin(), n.regime.end());
  return out;
}

template <typename T>
void Graph<T>::replay_regime(std::vector<std::int64_t> choices) {
  replay_ = std::move(choices);
  replay_pos_ = 0;
  replaying_ = true;
}

template <typename T>
std::vector<std::int64_t> Graph<T>::take_replay(std::size_t count) {
  if (replay_.size() - replay_pos_ < count) throw ShapeError("regime replay exhausted");
  std::vector<std::int64_t> out(replay_.begin() + static_cast<std::ptrdiff_t>(replay_pos_),
                                replay_.begin() + static_cast<std::ptrdiff_t>(replay_pos_ + count));
  replay_pos_ += count;
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace trunet
