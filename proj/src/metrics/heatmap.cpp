#include "trunet/metrics/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "trunet/errors.hpp"
#include "trunet/io/resize.hpp"

namespace trunet {

std::array<float, 3> heat_color(double t) {
  static constexpr std::array<std::array<float, 3>, 5> kStops{{
      {0, 0, 1},  // blue
      {0, 1, 1},  // cyan
      {0, 1, 0},  // green
      {1, 1, 0},  // yellow
      {1, 0, 0},  // red
  }};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const float f = static_cast<float>(t - i);
  std::array<float, 3> c;
  for (int k = 0; k < 3; ++k) c[k] = kStops[i][k] * (1 - f) + kStops[i + 1][k] * f;
  return c;
}

template <typename T>
Tensor<float> activation_heatmap(const Tensor<T>& features, int out_size) {
  if (features.rank() != 3) {
    throw ShapeError("activation_heatmap: expected (C,h,w), got " + shape_str(features.shape()));
  }
  if (out_size < 1) throw ShapeError("activation_heatmap: out_size must be >= 1");
  const std::int64_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  std::vector<double> avg(static_cast<std::size_t>(h * w), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t i = 0; i < h * w; ++i) avg[i] += features[ch * h * w + i];
  }
  for (auto& v : avg) v /= static_cast<double>(c);
  const auto [lo_it, hi_it] = std::minmax_element(avg.begin(), avg.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  const bool flat = !(range > 1e-12 * std::max(1.0, std::abs(*hi_it)));
  Tensor<float> color({3, h, w});
  for (std::int64_t i = 0; i < h * w; ++i) {
    const double t = flat ? 0.0 : (avg[i] - lo) / range;
    const auto rgb = heat_color(t);
    for (int k = 0; k < 3; ++k) color[k * h * w + i] = rgb[k];
  }
  return resize_bilinear(color, out_size, out_size);
}

template Tensor<float> activation_heatmap<float>(const Tensor<float>&, int);
template Tensor<float> activation_heatmap<double>(const Tensor<double>&, int);

}  // namespace trunet
