#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trunet/gradcheck.hpp"

namespace trunet {

enum class GradScope { kPrimitive, kBlock, kModel };

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kBlockTolerance = 1e-6;
inline constexpr double kModelTolerance = 1e-5;
inline constexpr int kModelCoordinates = 20;

// "primitive", "block" or "model"; throws ConfigError otherwise.
GradScope parse_grad_scope(const std::string& text);
const char* grad_scope_name(GradScope scope);

struct GradCase {
  std::string name;
  GradCheckResult result;
  double tolerance = 0;
  std::int64_t coordinates = 0;

  bool passed() const { return result.passed(tolerance); }
};

/// Finite-difference checks in 64-bit mode on seeded random inputs.
/// primitive: one case per differentiable op and operand.
/// block: input and parameter gradients of every network block.
/// model: the tiny configuration under the training loss, one case per
///        sampled parameter, kModelCoordinates coordinates in total.
std::vector<GradCase> run_grad_suite(GradScope scope, std::uint64_t seed = 0);

}  // namespace trunet
