#include "trunet/io/resize.hpp"

#include <algorithm>
#include <cmath>

#include "trunet/errors.hpp"

namespace trunet {
namespace {

struct Tap {
  std::int64_t lo, hi;
  float frac;
};

std::vector<Tap> taps(std::int64_t in, std::int64_t out) {
  std::vector<Tap> t(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
    const auto lo = std::min(static_cast<std::int64_t>(src), in - 1);
    t[o] = {lo, std::min(lo + 1, in - 1), static_cast<float>(src - static_cast<double>(lo))};
  }
  return t;
}

void check(const Tensor<float>& x, int out_h, int out_w, const char* who) {
  if (x.rank() != 3) throw ShapeError(std::string(who) + ": expected (C,H,W), got " + shape_str(x.shape()));
  if (out_h < 1 || out_w < 1) throw ShapeError(std::string(who) + ": output size must be >= 1");
}

}  // namespace

Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w) {
  check(image, out_h, out_w, "resize_bilinear");
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;
  const auto ty = taps(h, out_h), tx = taps(w, out_w);
  Tensor<float> out({c, out_h, out_w});
  for (std::int64_t k = 0; k < c; ++k) {
    const float* src = image.ptr() + k * h * w;
    float* dst = out.ptr() + k * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (std::int64_t x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const float top = src[a.lo * w + b.lo] * (1 - b.frac) + src[a.lo * w + b.hi] * b.frac;
        const float bot = src[a.hi * w + b.lo] * (1 - b.frac) + src[a.hi * w + b.hi] * b.frac;
        dst[y * out_w + x] = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }
  return out;
}

Tensor<float> resize_mask(const Tensor<float>& mask, int out_h, int out_w) {
  check(mask, out_h, out_w, "resize_mask");
  const std::int64_t h = mask.dim(1), w = mask.dim(2);
  Tensor<float> out({1, out_h, out_w});
  for (std::int64_t y = 0; y < out_h; ++y) {
    const auto sy = std::min(h - 1, static_cast<std::int64_t>((y + 0.5) * h / out_h));
    for (std::int64_t x = 0; x < out_w; ++x) {
      const auto sx = std::min(w - 1, static_cast<std::int64_t>((x + 0.5) * w / out_w));
      out[y * out_w + x] = mask[sy * w + sx] >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace trunet
