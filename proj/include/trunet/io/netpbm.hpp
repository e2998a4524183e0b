#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trunet/tensor.hpp"

namespace trunet {

/// Binary PGM (P5, one channel) or PPM (P6, three channels), maxval 255.
/// Decoded tensors are (C,H,W) with values byte / 255.
Tensor<float> decode_netpbm(std::span<const std::uint8_t> bytes);
Tensor<float> read_netpbm(const std::filesystem::path& path);

// Mask read: PGM with bytes > 127 mapped to 1, else 0. Returns (1,H,W).
Tensor<float> read_mask(const std::filesystem::path& path);

// (1,H,W) -> P5, (3,H,W) -> P6; values clamped to [0,1], scaled by 255 and
// rounded.
std::vector<std::uint8_t> encode_netpbm(const Tensor<float>& image);
void write_netpbm(const Tensor<float>& image, const std::filesystem::path& path);

}  // namespace trunet
