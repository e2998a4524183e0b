#include "trunet/io/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "trunet/errors.hpp"
#include "trunet/rng.hpp"

namespace trunet {
namespace {

struct Ellipse {
  double cy, cx, ry, rx, angle;

  // Normalized radius; < 1 inside.
  double radius(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
    return std::sqrt(u * u + v * v);
  }
};

float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

Sample make_sample(int size, Rng& rng, int index) {
  const int pixels = size * size;
  for (;;) {
    const int count = 1 + static_cast<int>(rng.below(3));
    std::vector<Ellipse> blobs;
    for (int b = 0; b < count; ++b) {
      const double r_lo = 0.08 * size, r_hi = 0.28 * size;
      blobs.push_back({rng.uniform(0.15, 0.85) * size, rng.uniform(0.15, 0.85) * size, rng.uniform(r_lo, r_hi),
                       rng.uniform(r_lo, r_hi), rng.uniform(0.0, std::numbers::pi)});
    }
    std::array<double, 3> bg{rng.uniform(0.55, 0.8), rng.uniform(0.3, 0.45), rng.uniform(0.25, 0.4)};
    std::array<double, 3> fg{rng.uniform(0.75, 0.95), rng.uniform(0.55, 0.75), rng.uniform(0.1, 0.25)};
    const double fy = rng.uniform(2.0, 6.0), fx = rng.uniform(2.0, 6.0), phase = rng.uniform(0.0, 6.283);

    Sample s{Tensor<float>({3, size, size}), Tensor<float>({1, size, size}), "synth_" + std::to_string(index)};
    int fg_pixels = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double py = y + 0.5, px = x + 0.5;
        double r = 1e9;
        for (const auto& e : blobs) r = std::min(r, e.radius(py, px));
        const bool inside = r < 1.0;
        // Blend weight drops from 1 toward 0.4 in the outer rim of each blob.
        const double t = std::clamp((1.0 - r) / 0.3, 0.0, 1.0);
        const double weight = inside ? 0.4 + 0.6 * t * t * (3 - 2 * t) : 0.0;
        const double texture = 0.06 * std::sin(fy * py / size * 6.283 + phase) * std::cos(fx * px / size * 6.283);
        const int p = y * size + x;
        for (int c = 0; c < 3; ++c) {
          const double noise = 0.03 * (rng.uniform() - 0.5);
          const double v = bg[c] * (1 - weight) + fg[c] * weight + texture + noise;
          s.image[c * pixels + p] = quantize(v);
        }
        s.mask[p] = inside ? 1.0f : 0.0f;
        fg_pixels += inside;
      }
    }
    const double frac = static_cast<double>(fg_pixels) / pixels;
    if (frac > kMinForeground && frac < kMaxForeground) return s;
  }
}

}  // namespace

std::vector<Sample> synth_dataset(int n, int size, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synth: n must be >= 1");
  if (size < 16 || size % 16 != 0) throw ConfigError("synth: size must be a positive multiple of 16");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(make_sample(size, rng, i));
  return out;
}

}  // namespace trunet
