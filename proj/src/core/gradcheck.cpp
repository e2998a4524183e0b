#include "trunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "trunet/errors.hpp"

namespace trunet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// f at x; replays `regime` when non-null.
double evaluate(const ScalarProgram& f, const Tensor<double>& x, const std::vector<std::int64_t>* regime) {
  Graph<double> graph;
  graph.set_grad_enabled(false);
  if (regime) graph.replay_regime(*regime);
  Var<double> out = f(graph, graph.constant(x));
  if (out.value().numel() != 1) {
    throw ShapeError("finite_diff_check: program must return a scalar, got " + shape_str(out.shape()));
  }
  return out.value()[0];
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarProgram& f, const Tensor<double>& point, double h,
                                  std::span<const std::int64_t> coords, const FdOptions& options) {
  if (!(h > 0)) throw ShapeError("finite_diff_check: step must be positive");
  Graph<double> graph;
  graph.set_tracks_regime(options.freeze_regime);
  Var<double> x = graph.leaf(point);
  Var<double> out = f(graph, x);
  graph.backward(out);
  const Tensor<double> analytic = graph.grad(x);
  const std::vector<std::int64_t> regime = options.freeze_regime ? graph.regime() : std::vector<std::int64_t>{};
  const std::vector<std::int64_t>* replay = options.freeze_regime ? &regime : nullptr;

  GradCheckResult result;
  if (!std::isfinite(out.value()[0])) {
    result.finite = false;
    return result;
  }
  std::vector<std::int64_t> all;
  if (coords.empty()) {
    all.resize(static_cast<std::size_t>(point.numel()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    coords = all;
  }
  Tensor<double> probe = point;
  auto at = [&](std::int64_t i, double offset) {
    const double original = probe[i];
    probe[i] = original + offset;
    const double v = evaluate(f, probe, replay);
    probe[i] = original;
    return v;
  };
  for (std::int64_t i : coords) {
    double numeric = 0.0;
    bool finite = true;
    if (options.stencil == FdStencil::kCentral) {
      const double plus = at(i, h), minus = at(i, -h);
      finite = std::isfinite(plus) && std::isfinite(minus);
      numeric = (plus - minus) / (2 * h);
    } else {
      const double p2 = at(i, 2 * h), p1 = at(i, h), m1 = at(i, -h), m2 = at(i, -2 * h);
      finite = std::isfinite(p2) && std::isfinite(p1) && std::isfinite(m1) && std::isfinite(m2);
      // Differences first, so samples that agree cancel exactly.
      numeric = (8 * (p1 - m1) - (p2 - m2)) / (12 * h);
    }
    if (!finite) {
      result.finite = false;
      result.worst_index = i;
      return result;
    }
    const double err = relative_error(analytic[i], numeric);
    if (err > result.max_rel_error || result.worst_index < 0) {
      result.max_rel_error = std::max(err, result.max_rel_error);
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace trunet
