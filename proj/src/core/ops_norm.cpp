// Batch norm, layer norm and softmax.
#include <algorithm>
#include <cmath>
#include <memory>

#include "trunet/errors.hpp"
#include "trunet/ops.hpp"

namespace trunet {

template <typename T>
BatchNormState<T>::BatchNormState(std::int64_t channels)
    : running_mean(Shape{channels}), running_var(Shape{channels}) {}

template <typename T>
void BatchNormState<T>::initialize_identity() {
  running_mean.fill(T(0));
  running_var.fill(T(1));
  initialized = true;
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                   BatchNormState<T>& state, NormMode mode, double eps) {
  const Tensor<T>& x = input.value();
  if (x.rank() != 4) throw ShapeError("batchnorm2d: expected 4-D input, got " + shape_str(x.shape()));
  if (!(eps > 0)) throw ShapeError("batchnorm2d: eps must be positive");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Shape channel_shape{c};
  if (gamma.value().shape() != channel_shape || beta.value().shape() != channel_shape) {
    throw ShapeError("batchnorm2d: gamma " + shape_str(gamma.value().shape()) + " / beta " +
                     shape_str(beta.value().shape()) + " do not match input " + shape_str(x.shape()));
  }
  if (state.running_mean.shape() != channel_shape || state.running_var.shape() != channel_shape) {
    throw ShapeError("batchnorm2d: running statistics " + shape_str(state.running_mean.shape()) +
                     " do not match input " + shape_str(x.shape()));
  }
  if (mode == NormMode::kEval && !state.initialized) {
    throw ShapeError("batchnorm2d: eval mode needs running statistics; train first or initialize them");
  }

  const std::int64_t count = n * hw;
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (mode == NormMode::kTrain) {
      double s = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = x.ptr() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      mu = s / static_cast<double>(count);
      double ss = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = x.ptr() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / static_cast<double>(count);
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      const double m = kBatchNormMomentum;
      state.running_mean[ch] = static_cast<T>((1 - m) * state.running_mean[ch] + m * mu);
      state.running_var[ch] = static_cast<T>((1 - m) * state.running_var[ch] + m * unbiased);
    } else {
      mu = state.running_mean[ch];
      var = state.running_var[ch];
    }
    (*mean)[ch] = mu;
    (*inv_std)[ch] = 1.0 / std::sqrt(var + eps);
  }
  if (mode == NormMode::kTrain) state.initialized = true;

  Tensor<T> out(x.shape());
  const T* g = gamma.value().ptr();
  const T* bt = beta.value().ptr();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* p = x.ptr() + (b * c + ch) * hw;
      T* q = out.ptr() + (b * c + ch) * hw;
      const T mu = static_cast<T>((*mean)[ch]);
      const T is = static_cast<T>((*inv_std)[ch]);
      for (std::int64_t i = 0; i < hw; ++i) q[i] = g[ch] * (p[i] - mu) * is + bt[ch];
    }
  }

  auto backward = [input, gamma, beta, mean, inv_std, mode, n, c, hw, count](
                      Graph<T>& graph, const Tensor<T>& dout) {
    const Tensor<T>& x = input.value();
    const T* g = gamma.value().ptr();
    std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0);
    std::vector<double> sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* p = x.ptr() + (b * c + ch) * hw;
        const T* d = dout.ptr() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double xhat = (p[i] - (*mean)[ch]) * (*inv_std)[ch];
          sum_dy[ch] += d[i];
          sum_dy_xhat[ch] += d[i] * xhat;
        }
      }
    }
    if (graph.requires_grad(gamma)) {
      Tensor<T>& dg = graph.grad_buffer(gamma);
      for (std::int64_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<T>(sum_dy_xhat[ch]);
    }
    if (graph.requires_grad(beta)) {
      Tensor<T>& db = graph.grad_buffer(beta);
      for (std::int64_t ch = 0; ch < c; ++ch) db[ch] += static_cast<T>(sum_dy[ch]);
    }
    if (!graph.requires_grad(input)) return;
    Tensor<T>& dx = graph.grad_buffer(input);
    const double m = static_cast<double>(count);
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* p = x.ptr() + (b * c + ch) * hw;
        const T* d = dout.ptr() + (b * c + ch) * hw;
        T* q = dx.ptr() + (b * c + ch) * hw;
        const double is = (*inv_std)[ch];
        if (mode == NormMode::kEval) {
          for (std::int64_t i = 0; i < hw; ++i) q[i] += static_cast<T>(d[i] * g[ch] * is);
          continue;
        }
        const double k = g[ch] * is / m;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double xhat = (p[i] - (*mean)[ch]) * is;
          q[i] += static_cast<T>(k * (m * d[i] - sum_dy[ch] - xhat * sum_dy_xhat[ch]));
        }
      }
    }
  };
  return input.graph().record(std::move(out), {input, gamma, beta}, backward, "batchnorm2d");
}

template <typename T>
Var<T> layernorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const Tensor<T>& x = input.value();
  if (!(eps > 0)) throw ShapeError("layernorm: eps must be positive");
  const std::int64_t d = x.shape().back();
  const std::int64_t rows = x.numel() / d;
  if (gamma.value().shape() != Shape{d} || beta.value().shape() != Shape{d}) {
    throw ShapeError("layernorm: gamma/beta must have shape [" + std::to_string(d) + "], got " +
                     shape_str(gamma.value().shape()) + " / " + shape_str(beta.value().shape()));
  }
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  Tensor<T> out(x.shape());
  const T* g = gamma.value().ptr();
  const T* bt = beta.value().ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* p = x.ptr() + r * d;
    double s = 0;
    for (std::int64_t i = 0; i < d; ++i) s += p[i];
    const double mu = s / static_cast<double>(d);
    double ss = 0;
    for (std::int64_t i = 0; i < d; ++i) ss += (p[i] - mu) * (p[i] - mu);
    const double is = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    (*mean)[r] = mu;
    (*inv_std)[r] = is;
    T* q = out.ptr() + r * d;
    for (std::int64_t i = 0; i < d; ++i) q[i] = static_cast<T>(g[i] * (p[i] - mu) * is + bt[i]);
  }
  auto backward = [input, gamma, beta, mean, inv_std, rows, d](Graph<T>& graph,
                                                                const Tensor<T>& dout) {
    const Tensor<T>& x = input.value();
    const T* g = gamma.value().ptr();
    const bool need_x = graph.requires_grad(input);
    Tensor<T>* dx = need_x ? &graph.grad_buffer(input) : nullptr;
    std::vector<double> dg(static_cast<std::size_t>(d), 0.0), db(static_cast<std::size_t>(d), 0.0);
    std::vector<double> xhat(static_cast<std::size_t>(d));
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* p = x.ptr() + r * d;
      const T* dy = dout.ptr() + r * d;
      double s1 = 0, s2 = 0;
      for (std::int64_t i = 0; i < d; ++i) {
        xhat[i] = (p[i] - (*mean)[r]) * (*inv_std)[r];
        dg[i] += dy[i] * xhat[i];
        db[i] += dy[i];
        const double gy = dy[i] * g[i];
        s1 += gy;
        s2 += gy * xhat[i];
      }
      if (!need_x) continue;
      T* q = dx->ptr() + r * d;
      const double k = (*inv_std)[r] / static_cast<double>(d);
      for (std::int64_t i = 0; i < d; ++i) {
        q[i] += static_cast<T>(k * (static_cast<double>(d) * dy[i] * g[i] - s1 - xhat[i] * s2));
      }
    }
    if (graph.requires_grad(gamma)) {
      Tensor<T>& t = graph.grad_buffer(gamma);
      for (std::int64_t i = 0; i < d; ++i) t[i] += static_cast<T>(dg[i]);
    }
    if (graph.requires_grad(beta)) {
      Tensor<T>& t = graph.grad_buffer(beta);
      for (std::int64_t i = 0; i < d; ++i) t[i] += static_cast<T>(db[i]);
    }
  };
  return input.graph().record(std::move(out), {input, gamma, beta}, backward, "layernorm");
}

template <typename T>
Var<T> softmax(const Var<T>& input, int axis) {
  const Tensor<T>& x = input.value();
  const int rank = static_cast<int>(x.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("softmax: axis out of range for shape " + shape_str(x.shape()));
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(i);
  const std::int64_t len = x.dim(axis);
  Tensor<T> out(x.shape());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const T* p = x.ptr() + o * len * inner + in;
      T* q = out.ptr() + o * len * inner + in;
      T mx = p[0];
      for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, p[i * inner]);
      T s = 0;
      for (std::int64_t i = 0; i < len; ++i) {
        q[i * inner] = std::exp(p[i * inner] - mx);
        s += q[i * inner];
      }
      for (std::int64_t i = 0; i < len; ++i) q[i * inner] /= s;
    }
  }
  const std::size_t out_id = input.graph().size();
  auto backward = [input, out_id, outer, inner, len](Graph<T>& graph, const Tensor<T>& dout) {
    const Tensor<T>& y = graph.value(out_id);
    Tensor<T>& dx = graph.grad_buffer(input);
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * len * inner + in;
        T dot = 0;
        for (std::int64_t i = 0; i < len; ++i) dot += dout[base + i * inner] * y[base + i * inner];
        for (std::int64_t i = 0; i < len; ++i) {
          dx[base + i * inner] += y[base + i * inner] * (dout[base + i * inner] - dot);
        }
      }
    }
  };
  return input.graph().record(std::move(out), {input}, backward, "softmax");
}

#define TRUNET_INSTANTIATE(T)                                                                  \
  template struct BatchNormState<T>;                                                          \
  template Var<T> batchnorm2d<T>(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                 BatchNormState<T>&, NormMode, double);                       \
  template Var<T> layernorm<T>(const Var<T>&, const Var<T>&, const Var<T>&, double);          \
  template Var<T> softmax<T>(const Var<T>&, int);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)
#undef TRUNET_INSTANTIATE

}  // namespace trunet
