#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "trunet/autodiff.hpp"

namespace trunet {

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t worst_index = -1;  // coordinate of max_rel_error
  bool finite = true;             // false when f was non-finite at a probe point

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

// Scalar program of one tensor argument, evaluated in 64-bit mode.
using ScalarProgram = std::function<Var<double>(Graph<double>&, const Var<double>&)>;

enum class FdStencil {
  kCentral,     // (f(x+h) - f(x-h)) / 2h, error O(h^2)
  kFivePoint,   // (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h, error O(h^4)
};

struct FdOptions {
  FdStencil stencil = FdStencil::kCentral;
  // Probe points replay the relu masks and max-pool argmaxes recorded at
  // `point` (Graph::replay_regime), so a step may cross a kink without
  // leaving the smooth piece whose derivative backward() computes.
  bool freeze_regime = false;
};

/// Compares backward() against finite differences at every coordinate of
/// `point`, or only at `coords` when given.
GradCheckResult finite_diff_check(const ScalarProgram& f, const Tensor<double>& point, double h,
                                  std::span<const std::int64_t> coords = {}, const FdOptions& options = {});

}  // namespace trunet
