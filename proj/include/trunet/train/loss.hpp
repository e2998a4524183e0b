#pragma once

#include "trunet/autodiff.hpp"

namespace trunet {

inline constexpr double kDiceSmooth = 1e-6;
inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy plus soft dice loss
/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), summed over the batch.
/// Predictions are clamped to [1e-7, 1 - 1e-7] before the logarithm.
template <typename T>
Var<T> bce_dice_loss(const Var<T>& pred, const Var<T>& target);

}  // namespace trunet
