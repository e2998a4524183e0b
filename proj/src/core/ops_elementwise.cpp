// Activations, arithmetic and reductions.
#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <numbers>

#include "trunet/errors.hpp"
#include "trunet/ops.hpp"

namespace trunet {

namespace {

template <typename T>
T sigmoid_scalar(T x) {
  T y;
  if (x >= 0) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    y = e / (T(1) + e);
  }
  // Keep outputs strictly inside (0, 1) even where the exact value rounds.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
  return std::clamp(y, lo, hi);
}

template <typename T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

}  // namespace

template <typename T>
Var<T> activation(const Var<T>& input, ActivationKind kind) {
  const Tensor<T>& x = input.value();
  Graph<T>& g = input.graph();
  Tensor<T> out(x.shape());
  const std::int64_t n = x.numel();
  // Relu's active set, kept only when the graph tracks or replays regimes.
  std::shared_ptr<const std::vector<std::int64_t>> active;
  switch (kind) {
    case ActivationKind::kRelu:
      if (g.replaying() || g.tracks_regime()) {
        std::vector<std::int64_t> mask;
        if (g.replaying()) {
          mask = g.take_replay(static_cast<std::size_t>(n));
        } else {
          mask.resize(static_cast<std::size_t>(n));
          for (std::int64_t i = 0; i < n; ++i) mask[static_cast<std::size_t>(i)] = x[i] > T(0);
        }
        for (std::int64_t i = 0; i < n; ++i) {
          out[i] = mask[static_cast<std::size_t>(i)] || std::isnan(x[i]) ? x[i] : T(0);
        }
        active = std::make_shared<const std::vector<std::int64_t>>(std::move(mask));
      } else {
        // NaN passes through.
        for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] < T(0) ? T(0) : x[i];
      }
      break;
    case ActivationKind::kSigmoid:
      for (std::int64_t i = 0; i < n; ++i) out[i] = sigmoid_scalar(x[i]);
      break;
    case ActivationKind::kGelu:
      for (std::int64_t i = 0; i < n; ++i) out[i] = gelu_scalar(x[i]);
      break;
  }
  const std::size_t out_id = g.size();
  auto backward = [input, kind, out_id, active](Graph<T>& graph, const Tensor<T>& dout) {
    const Tensor<T>& x = input.value();
    Tensor<T>& dx = graph.grad_buffer(input);
    const std::int64_t n = x.numel();
    switch (kind) {
      case ActivationKind::kRelu:
        if (active) {
          for (std::int64_t i = 0; i < n; ++i) dx[i] += (*active)[static_cast<std::size_t>(i)] ? dout[i] : T(0);
        } else {
          // Subgradient 0 at exactly 0.
          for (std::int64_t i = 0; i < n; ++i) dx[i] += x[i] > T(0) ? dout[i] : T(0);
        }
        break;
      case ActivationKind::kSigmoid: {
        const Tensor<T>& y = graph.value(out_id);
        for (std::int64_t i = 0; i < n; ++i) dx[i] += dout[i] * y[i] * (T(1) - y[i]);
        break;
      }
      case ActivationKind::kGelu:
        for (std::int64_t i = 0; i < n; ++i) dx[i] += dout[i] * gelu_grad(x[i]);
        break;
    }
  };
  const char* name = kind == ActivationKind::kRelu      ? "relu"
                     : kind == ActivationKind::kSigmoid ? "sigmoid"
                                                        : "gelu";
  Var<T> result = g.record(std::move(out), {input}, backward, name);
  if (active && g.tracks_regime()) g.set_regime(result, *active);
  return result;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  if (!is_suffix(x.shape(), y.shape())) {
    throw ShapeError("add: cannot broadcast " + shape_str(y.shape()) + " onto " + shape_str(x.shape()));
  }
  Tensor<T> out = x;
  const std::int64_t inner = y.numel();
  const std::int64_t reps = x.numel() / inner;
  for (std::int64_t r = 0; r < reps; ++r) {
    T* p = out.ptr() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) p[i] += y[i];
  }
  auto backward = [a, b, inner, reps](Graph<T>& graph, const Tensor<T>& dout) {
    graph.accumulate(a, dout);
    if (!graph.requires_grad(b)) return;
    Tensor<T>& db = graph.grad_buffer(b);
    for (std::int64_t r = 0; r < reps; ++r) {
      const T* p = dout.ptr() + r * inner;
      for (std::int64_t i = 0; i < inner; ++i) db[i] += p[i];
    }
  };
  return a.graph().record(std::move(out), {a, b}, backward, "add");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  if (x.shape() != y.shape()) {
    throw ShapeError("mul: shapes differ: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
  auto backward = [a, b](Graph<T>& graph, const Tensor<T>& dout) {
    const Tensor<T>& x = a.value();
    const Tensor<T>& y = b.value();
    if (graph.requires_grad(a)) {
      Tensor<T>& da = graph.grad_buffer(a);
      for (std::int64_t i = 0; i < x.numel(); ++i) da[i] += dout[i] * y[i];
    }
    if (graph.requires_grad(b)) {
      Tensor<T>& db = graph.grad_buffer(b);
      for (std::int64_t i = 0; i < x.numel(); ++i) db[i] += dout[i] * x[i];
    }
  };
  return a.graph().record(std::move(out), {a, b}, backward, "mul");
}

template <typename T>
Var<T> scale(const Var<T>& input, double factor) {
  Tensor<T> out = input.value();
  out *= static_cast<T>(factor);
  auto backward = [input, factor](Graph<T>& graph, const Tensor<T>& dout) {
    Tensor<T>& dx = graph.grad_buffer(input);
    const T f = static_cast<T>(factor);
    for (std::int64_t i = 0; i < dout.numel(); ++i) dx[i] += dout[i] * f;
  };
  return input.graph().record(std::move(out), {input}, backward, "scale");
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  // Neumaier compensated summation.
  double s = 0, c = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = x[i], t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  s += c;
  auto backward = [input](Graph<T>& graph, const Tensor<T>& dout) {
    Tensor<T>& dx = graph.grad_buffer(input);
    for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] += dout[0];
  };
  return input.graph().record(Tensor<T>::scalar(static_cast<T>(s)), {input}, backward, "sum");
}

template <typename T>
Var<T> mean(const Var<T>& input) {
  return scale(sum(input), 1.0 / static_cast<double>(input.value().numel()));
}

#define TRUNET_INSTANTIATE(T)                                         \
  template Var<T> activation<T>(const Var<T>&, ActivationKind);      \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);              \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);              \
  template Var<T> scale<T>(const Var<T>&, double);                   \
  template Var<T> sum<T>(const Var<T>&);                             \
  template Var<T> mean<T>(const Var<T>&);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)
#undef TRUNET_INSTANTIATE

}  // namespace trunet
