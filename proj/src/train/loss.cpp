#include "trunet/train/loss.hpp"

#include <algorithm>
#include <cmath>

#include "trunet/errors.hpp"

namespace trunet {

template <typename T>
Var<T> bce_dice_loss(const Var<T>& pred, const Var<T>& target) {
  const Tensor<T>& p = pred.value();
  const Tensor<T>& t = target.value();
  if (p.shape() != t.shape()) {
    throw ShapeError("bce_dice_loss: prediction " + shape_str(p.shape()) + " vs target " +
                     shape_str(t.shape()));
  }
  const std::int64_t count = p.numel();
  const double lo = kProbClamp, hi = 1.0 - kProbClamp;
  double bce = 0, inter = 0, psum = 0, tsum = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    const double pi = std::clamp(static_cast<double>(p[i]), lo, hi);
    const double ti = t[i];
    bce -= ti * std::log(pi) + (1 - ti) * std::log(1 - pi);
    inter += static_cast<double>(p[i]) * ti;
    psum += p[i];
    tsum += ti;
  }
  bce /= static_cast<double>(count);
  const double denom = psum + tsum + kDiceSmooth;
  const double dice = 1.0 - (2 * inter + kDiceSmooth) / denom;
  const double total = bce + dice;

  auto backward = [pred, target, count, inter, denom, lo, hi](Graph<T>& graph, const Tensor<T>& dout) {
    const Tensor<T>& p = pred.value();
    const Tensor<T>& t = target.value();
    Tensor<T>& dp = graph.grad_buffer(pred);
    const double g = dout[0];
    const double numer = 2 * inter + kDiceSmooth;
    for (std::int64_t i = 0; i < count; ++i) {
      // Log terms use the clamped value; the gradient passes straight through
      // the clamp so saturated wrong pixels keep a learning signal.
      const double pi = std::clamp(static_cast<double>(p[i]), lo, hi);
      const double ti = t[i];
      const double d_bce = -(ti / pi - (1 - ti) / (1 - pi)) / static_cast<double>(count);
      const double d_dice = -(2 * ti * denom - numer) / (denom * denom);
      dp[i] += static_cast<T>(g * (d_bce + d_dice));
    }
  };
  return pred.graph().record(Tensor<T>::scalar(static_cast<T>(total)), {pred, target}, backward,
                             "bce_dice_loss");
}

template Var<float> bce_dice_loss<float>(const Var<float>&, const Var<float>&);
template Var<double> bce_dice_loss<double>(const Var<double>&, const Var<double>&);

}  // namespace trunet
