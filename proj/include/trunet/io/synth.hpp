#pragma once

#include <cstdint>
#include <vector>

#include "trunet/io/sample.hpp"

namespace trunet {

inline constexpr double kMinForeground = 0.01;
inline constexpr double kMaxForeground = 0.6;

/// Deterministic stand-in dataset: 1-3 soft-edged elliptical blobs on a
/// textured background. Masks are the blob supports, with foreground fraction
/// in (0.01, 0.6). Pixel values are multiples of 1/255 so PPM round trips are
/// exact.
std::vector<Sample> synth_dataset(int n, int size, std::uint64_t seed);

}  // namespace trunet
