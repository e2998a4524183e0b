#pragma once

// Plain nested-loop references. Everything here is computed in double from
// the defining formulas and shares no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <vector>

#include "trunet/rng.hpp"
#include "trunet/tensor.hpp"

namespace oracle {

using trunet::Shape;
using trunet::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape shape, trunet::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline int rand_int(trunet::Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

// out[n][o][y][x] = b[o] + sum_{c,i,j} in[n][c][y*s - p + i*d][x*s - p + j*d] * w[o][c][i][j]
template <typename T>
Tensor<double> conv2d(const Tensor<T>& in, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> b, int stride, int pad,
                      int dil) {
  const auto N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const auto O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::int64_t OH = (H + 2 * pad - dil * (KH - 1) - 1) / stride + 1;
  const std::int64_t OW = (W + 2 * pad - dil * (KW - 1) - 1) / stride + 1;
  Tensor<double> out({N, O, OH, OW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t y = 0; y < OH; ++y)
        for (std::int64_t x = 0; x < OW; ++x) {
          double acc = b ? static_cast<double>((*b)[o]) : 0.0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < KH; ++i)
              for (std::int64_t j = 0; j < KW; ++j) {
                const std::int64_t yy = y * stride - pad + i * dil, xx = x * stride - pad + j * dil;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += static_cast<double>(in.at(n, c, yy, xx)) * static_cast<double>(w.at(o, c, i, j));
              }
          out.at(n, o, y, x) = acc;
        }
  return out;
}

// Padding never wins (-inf).
template <typename T>
Tensor<double> maxpool2d(const Tensor<T>& in, int window, int stride, int pad) {
  const auto N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::int64_t OH = (H + 2 * pad - window) / stride + 1, OW = (W + 2 * pad - window) / stride + 1;
  Tensor<double> out({N, C, OH, OW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < OH; ++y)
        for (std::int64_t x = 0; x < OW; ++x) {
          double m = -std::numeric_limits<double>::infinity();
          for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) {
              const std::int64_t yy = y * stride - pad + i, xx = x * stride - pad + j;
              if (yy >= 0 && yy < H && xx >= 0 && xx < W) m = std::max(m, static_cast<double>(in.at(n, c, yy, xx)));
            }
          out.at(n, c, y, x) = m;
        }
  return out;
}

// Batched (B,m,k) x (B,k,n), or rank 2.
template <typename T>
Tensor<double> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool batched = a.rank() == 3;
  const std::int64_t B = batched ? a.dim(0) : 1;
  const std::int64_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1), n = b.dim(b.rank() - 1);
  Tensor<double> out(batched ? Shape{B, m, n} : Shape{m, n});
  for (std::int64_t z = 0; z < B; ++z)
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::int64_t t = 0; t < k; ++t) {
          acc += static_cast<double>(a[(z * m + i) * k + t]) * static_cast<double>(b[(z * k + t) * n + j]);
        }
        out[(z * m + i) * n + j] = acc;
      }
  return out;
}

// Half-pixel centres: output o samples input coordinate (o + 0.5) / 2 - 0.5,
// clamped to the valid range.
inline double bilinear_sample_1d(std::int64_t o, std::int64_t in, std::int64_t* i0, std::int64_t* i1) {
  double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in - 1));
  *i0 = static_cast<std::int64_t>(std::floor(src));
  *i1 = std::min(*i0 + 1, in - 1);
  return src - static_cast<double>(*i0);
}

template <typename T>
Tensor<double> upsample2x(const Tensor<T>& in) {
  const auto N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  Tensor<double> out({N, C, 2 * H, 2 * W});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < 2 * H; ++y)
        for (std::int64_t x = 0; x < 2 * W; ++x) {
          std::int64_t y0, y1, x0, x1;
          const double fy = bilinear_sample_1d(y, H, &y0, &y1);
          const double fx = bilinear_sample_1d(x, W, &x0, &x1);
          auto v = [&](std::int64_t yy, std::int64_t xx) { return static_cast<double>(in.at(n, c, yy, xx)); };
          out.at(n, c, y, x) = (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) +
                               fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
        }
  return out;
}

// One head over tokens x (n, c): softmax((xWq+bq)(xWk)^T / sqrt(c)) (xWv+bv) Wo + bo.
// Weights are (in, out).
template <typename T>
Tensor<double> single_head_attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& bq,
                                     const Tensor<T>& wk, const Tensor<T>& wv, const Tensor<T>& bv,
                                     const Tensor<T>& wo, const Tensor<T>& bo) {
  const std::int64_t n = x.dim(0), c = x.dim(1);
  auto proj = [&](const Tensor<T>& w, const Tensor<T>* b) {
    std::vector<double> out(static_cast<std::size_t>(n * c));
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        double acc = b ? static_cast<double>((*b)[j]) : 0.0;
        for (std::int64_t t = 0; t < c; ++t) acc += static_cast<double>(x[i * c + t]) * static_cast<double>(w[t * c + j]);
        out[static_cast<std::size_t>(i * c + j)] = acc;
      }
    return out;
  };
  const auto q = proj(wq, &bq), k = proj(wk, nullptr), v = proj(wv, &bv);
  std::vector<double> mixed(static_cast<std::size_t>(n * c), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::int64_t t = 0; t < c; ++t) acc += q[static_cast<std::size_t>(i * c + t)] * k[static_cast<std::size_t>(j * c + t)];
      s[static_cast<std::size_t>(j)] = acc / std::sqrt(static_cast<double>(c));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t t = 0; t < c; ++t)
        mixed[static_cast<std::size_t>(i * c + t)] += s[static_cast<std::size_t>(j)] / z * v[static_cast<std::size_t>(j * c + t)];
  }
  Tensor<double> out({n, c});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      double acc = static_cast<double>(bo[j]);
      for (std::int64_t t = 0; t < c; ++t) acc += mixed[static_cast<std::size_t>(i * c + t)] * static_cast<double>(wo[t * c + j]);
      out[i * c + j] = acc;
    }
  return out;
}

// max |a - b| / max(|b|, 1) over elements; shapes must match.
template <typename A, typename B>
double max_rel_diff(const Tensor<A>& a, const Tensor<B>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double worst = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(y), 1.0));
  }
  return worst;
}

}  // namespace oracle
