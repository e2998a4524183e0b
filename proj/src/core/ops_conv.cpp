// Convolution, pooling and resampling kernels with their backward rules.
#include <algorithm>
#include <limits>
#include <memory>

#include "gemm.hpp"
#include "trunet/errors.hpp"
#include "trunet/ops.hpp"

namespace trunet {

ConvSpec ConvSpec::same(int k, int dilation, int stride) {
  const int pad = dilation * (k - 1) / 2;
  return ConvSpec{k, k, stride, pad, pad, pad, pad, dilation};
}

ConvSpec ConvSpec::square(int k, int stride, int pad, int dilation) {
  return ConvSpec{k, k, stride, pad, pad, pad, pad, dilation};
}

std::int64_t conv_output_extent(std::int64_t in, int kernel, int stride, int pad_lo, int pad_hi,
                                int dilation) {
  const std::int64_t span = in + pad_lo + pad_hi - std::int64_t{dilation} * (kernel - 1) - 1;
  if (span < 0) return 0;
  return span / stride + 1;
}

std::int64_t ConvSpec::out_h(std::int64_t in_h) const {
  return conv_output_extent(in_h, kernel_h, stride, pad_top, pad_bottom, dilation);
}

std::int64_t ConvSpec::out_w(std::int64_t in_w) const {
  return conv_output_extent(in_w, kernel_w, stride, pad_left, pad_right, dilation);
}

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, oh, ow;
  std::int64_t k() const { return cin * kh * kw; }
  std::int64_t p() const { return oh * ow; }
  int kh, kw;
};

void check_spec(const ConvSpec& spec) {
  if (spec.kernel_h < 1 || spec.kernel_w < 1 || spec.stride < 1 || spec.dilation < 1 ||
      spec.pad_top < 0 || spec.pad_bottom < 0 || spec.pad_left < 0 || spec.pad_right < 0) {
    throw ShapeError("conv2d: kernel, stride and dilation must be positive and padding >= 0");
  }
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.pad_top == 0 &&
         s.pad_bottom == 0 && s.pad_left == 0 && s.pad_right == 0;
}

// cols is (cin*kh*kw, oh*ow); out-of-image taps read zero.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, const ConvSpec& s, T* cols) {
  const std::int64_t p = g.p();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * p;
        for (std::int64_t oi = 0; oi < g.oh; ++oi) {
          const std::int64_t ii = oi * s.stride - s.pad_top + std::int64_t{ki} * s.dilation;
          T* dst = row + oi * g.ow;
          if (ii < 0 || ii >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + ii) * g.w;
          for (std::int64_t oj = 0; oj < g.ow; ++oj) {
            const std::int64_t jj = oj * s.stride - s.pad_left + std::int64_t{kj} * s.dilation;
            dst[oj] = (jj >= 0 && jj < g.w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, const ConvSpec& s, T* dx) {
  const std::int64_t p = g.p();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * p;
        for (std::int64_t oi = 0; oi < g.oh; ++oi) {
          const std::int64_t ii = oi * s.stride - s.pad_top + std::int64_t{ki} * s.dilation;
          if (ii < 0 || ii >= g.h) continue;
          T* dst = dx + (c * g.h + ii) * g.w;
          const T* src = row + oi * g.ow;
          for (std::int64_t oj = 0; oj < g.ow; ++oj) {
            const std::int64_t jj = oj * s.stride - s.pad_left + std::int64_t{kj} * s.dilation;
            if (jj >= 0 && jj < g.w) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvSpec& spec) {
  check_spec(spec);
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = weight.value();
  if (x.rank() != 4 || wt.rank() != 4) {
    throw ShapeError("conv2d: expected 4-D input and weight, got input " + shape_str(x.shape()) +
                     " and weight " + shape_str(wt.shape()));
  }
  if (wt.dim(1) != x.dim(1) || wt.dim(2) != spec.kernel_h || wt.dim(3) != spec.kernel_w) {
    throw ShapeError("conv2d: weight " + shape_str(wt.shape()) + " does not fit input " +
                     shape_str(x.shape()) + " with a " + std::to_string(spec.kernel_h) + "x" +
                     std::to_string(spec.kernel_w) + " kernel");
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), wt.dim(0), spec.out_h(x.dim(2)),
                 spec.out_w(x.dim(3)), spec.kernel_h, spec.kernel_w};
  if (g.oh < 1 || g.ow < 1) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " gives a non-positive output extent");
  }
  if (bias.valid() && bias.value().shape() != Shape{g.cout}) {
    throw ShapeError("conv2d: bias " + shape_str(bias.value().shape()) + " does not match " +
                     std::to_string(g.cout) + " output channels");
  }

  const bool pointwise = is_pointwise(spec);
  Tensor<T> out({g.n, g.cout, g.oh, g.ow});
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(g.k() * g.p()));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = x.ptr() + n * g.cin * g.h * g.w;
    const T* colp = xn;
    if (!pointwise) {
      im2col(xn, g, spec, cols.data());
      colp = cols.data();
    }
    T* on = out.ptr() + n * g.cout * g.p();
    detail::gemm<T>(false, false, g.cout, g.p(), g.k(), T(1), wt.ptr(), colp, T(0), on);
    if (bias.valid()) {
      const T* b = bias.value().ptr();
      for (std::int64_t c = 0; c < g.cout; ++c) {
        T* plane = on + c * g.p();
        for (std::int64_t i = 0; i < g.p(); ++i) plane[i] += b[c];
      }
    }
  }

  auto backward = [input, weight, bias, spec, g, pointwise](Graph<T>& graph, const Tensor<T>& dout) {
    const Tensor<T>& x = input.value();
    const Tensor<T>& wt = weight.value();
    const bool need_x = graph.requires_grad(input);
    const bool need_w = graph.requires_grad(weight);
    std::vector<T> cols(static_cast<std::size_t>(g.k() * g.p()));
    Tensor<T>* dx = need_x ? &graph.grad_buffer(input) : nullptr;
    Tensor<T>* dw = need_w ? &graph.grad_buffer(weight) : nullptr;
    for (std::int64_t n = 0; n < g.n; ++n) {
      const T* dn = dout.ptr() + n * g.cout * g.p();
      const T* xn = x.ptr() + n * g.cin * g.h * g.w;
      if (need_w) {
        const T* colp = xn;
        if (!pointwise) {
          im2col(xn, g, spec, cols.data());
          colp = cols.data();
        }
        detail::gemm<T>(false, true, g.cout, g.k(), g.p(), T(1), dn, colp, T(1), dw->ptr());
      }
      if (need_x) {
        T* dxn = dx->ptr() + n * g.cin * g.h * g.w;
        if (pointwise) {
          detail::gemm<T>(true, false, g.k(), g.p(), g.cout, T(1), wt.ptr(), dn, T(1), dxn);
        } else {
          detail::gemm<T>(true, false, g.k(), g.p(), g.cout, T(1), wt.ptr(), dn, T(0), cols.data());
          col2im_add(cols.data(), g, spec, dxn);
        }
      }
    }
    if (bias.valid() && graph.requires_grad(bias)) {
      Tensor<T>& db = graph.grad_buffer(bias);
      for (std::int64_t n = 0; n < g.n; ++n) {
        for (std::int64_t c = 0; c < g.cout; ++c) {
          const T* plane = dout.ptr() + (n * g.cout + c) * g.p();
          T acc = 0;
          for (std::int64_t i = 0; i < g.p(); ++i) acc += plane[i];
          db[c] += acc;
        }
      }
    }
  };
  std::vector<Var<T>> inputs{input, weight};
  if (bias.valid()) inputs.push_back(bias);
  return input.graph().record(std::move(out), inputs, backward, "conv2d");
}

template <typename T>
Var<T> maxpool2d(const Var<T>& input, int window, int stride, int pad) {
  const Tensor<T>& x = input.value();
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected 4-D input, got " + shape_str(x.shape()));
  if (window < 1 || stride < 1 || pad < 0 || 2 * pad > window) {
    throw ShapeError("maxpool2d: need window >= 1, stride >= 1 and 0 <= pad <= window/2");
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = conv_output_extent(h, window, stride, pad, pad, 1);
  const std::int64_t ow = conv_output_extent(w, window, stride, pad, pad, 1);
  if (oh < 1 || ow < 1) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  Tensor<T> out({n, c, oh, ow});
  Graph<T>& g = input.graph();
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()));
  if (g.replaying()) {
    *argmax = g.take_replay(argmax->size());
    for (std::int64_t o = 0; o < out.numel(); ++o) out[o] = x[(*argmax)[static_cast<std::size_t>(o)]];
  } else {
    std::int64_t o = 0;
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T* src = x.ptr() + plane * h * w;
      for (std::int64_t oi = 0; oi < oh; ++oi) {
        for (std::int64_t oj = 0; oj < ow; ++oj, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (int ki = 0; ki < window; ++ki) {
            const std::int64_t ii = oi * stride - pad + ki;
            if (ii < 0 || ii >= h) continue;
            for (int kj = 0; kj < window; ++kj) {
              const std::int64_t jj = oj * stride - pad + kj;
              if (jj < 0 || jj >= w) continue;
              // Strict comparison keeps the first maximum in scan order.
              if (best_idx < 0 || src[ii * w + jj] > best) {
                best = src[ii * w + jj];
                best_idx = plane * h * w + ii * w + jj;
              }
            }
          }
          out[o] = best;
          (*argmax)[static_cast<std::size_t>(o)] = best_idx;
        }
      }
    }
  }
  auto backward = [input, argmax](Graph<T>& graph, const Tensor<T>& dout) {
    Tensor<T>& dx = graph.grad_buffer(input);
    for (std::size_t i = 0; i < argmax->size(); ++i) {
      dx[(*argmax)[i]] += dout[static_cast<std::int64_t>(i)];
    }
  };
  Var<T> result = g.record(std::move(out), {input}, backward, "maxpool2d");
  if (g.tracks_regime()) g.set_regime(result, *argmax);
  return result;
}

namespace {

struct Tap {
  std::int64_t lo, hi;
  double frac;
};

// Half-pixel-center source taps for 2x upsampling along one axis.
std::vector<Tap> upsample_taps(std::int64_t in) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * in));
  for (std::int64_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    std::int64_t lo = static_cast<std::int64_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::int64_t hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = Tap{lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> bilinear_upsample2x(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  if (x.rank() != 4) {
    throw ShapeError("bilinear_upsample2x: expected 4-D input, got " + shape_str(x.shape()));
  }
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  Tensor<T> out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * h * w;
    T* dst = out.ptr() + p * 4 * h * w;
    for (std::int64_t oi = 0; oi < 2 * h; ++oi) {
      const Tap& a = ty[static_cast<std::size_t>(oi)];
      const T fy = static_cast<T>(a.frac);
      for (std::int64_t oj = 0; oj < 2 * w; ++oj) {
        const Tap& b = tx[static_cast<std::size_t>(oj)];
        const T fx = static_cast<T>(b.frac);
        const T top = src[a.lo * w + b.lo] * (T(1) - fx) + src[a.lo * w + b.hi] * fx;
        const T bot = src[a.hi * w + b.lo] * (T(1) - fx) + src[a.hi * w + b.hi] * fx;
        dst[oi * 2 * w + oj] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  auto backward = [input, ty, tx, planes, h, w](Graph<T>& graph, const Tensor<T>& dout) {
    Tensor<T>& dx = graph.grad_buffer(input);
    for (std::int64_t p = 0; p < planes; ++p) {
      T* dst = dx.ptr() + p * h * w;
      const T* src = dout.ptr() + p * 4 * h * w;
      for (std::int64_t oi = 0; oi < 2 * h; ++oi) {
        const Tap& a = ty[static_cast<std::size_t>(oi)];
        const T fy = static_cast<T>(a.frac);
        for (std::int64_t oj = 0; oj < 2 * w; ++oj) {
          const Tap& b = tx[static_cast<std::size_t>(oj)];
          const T fx = static_cast<T>(b.frac);
          const T g = src[oi * 2 * w + oj];
          dst[a.lo * w + b.lo] += g * (T(1) - fy) * (T(1) - fx);
          dst[a.lo * w + b.hi] += g * (T(1) - fy) * fx;
          dst[a.hi * w + b.lo] += g * fy * (T(1) - fx);
          dst[a.hi * w + b.hi] += g * fy * fx;
        }
      }
    }
  };
  return input.graph().record(std::move(out), {input}, backward, "bilinear_upsample2x");
}

#define TRUNET_INSTANTIATE(T)                                                                   \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);    \
  template Var<T> maxpool2d<T>(const Var<T>&, int, int, int);                                  \
  template Var<T> bilinear_upsample2x<T>(const Var<T>&);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)
#undef TRUNET_INSTANTIATE

}  // namespace trunet
