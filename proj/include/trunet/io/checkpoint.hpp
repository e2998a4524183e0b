#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trunet/model/config.hpp"
#include "trunet/model/params.hpp"

namespace trunet {

// File layout, little-endian throughout:
//   "TRUNCKPT" | u32 version | u32 len, config text |
//   records: u32 len, name | u8 rank | u32 extents[rank] | f32 payload |
//   u32 CRC-32 of every preceding byte
// Batch-norm running statistics are stored as <layer>.running_mean and
// <layer>.running_var records.
inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'U', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParameterStore<T>& params, const ModelConfig& config);

template <typename T>
struct Checkpoint {
  ModelConfig config;
  ParameterStore<T> params;
};

// Rebuilds the full store for the stored config; every parameter of that
// config must be present.
template <typename T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(const ParameterStore<T>& params, const ModelConfig& config,
                     const std::filesystem::path& path);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Copies the records whose names start with `prefix` into `params`, which
/// must already hold them with matching shapes. Returns the names loaded.
template <typename T>
std::vector<std::string> load_checkpoint_into(const std::filesystem::path& path,
                                              ParameterStore<T>& params, const std::string& prefix);

}  // namespace trunet
