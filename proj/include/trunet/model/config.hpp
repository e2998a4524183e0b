#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace trunet {

/// Architecture hyperparameters. Channel counts are the full-scale ResNet-50
/// values scaled by width_mult (rounded, at least 1).
struct ModelConfig {
  double width_mult = 1.0;
  // Blocks per encoder stage. Only the first three stages are used: the
  // bottleneck is taken after the third (stride 16).
  std::array<int, 4> stage_depths{3, 4, 6, 3};
  bool use_transformer = true;
  bool use_dilated = true;
  int heads = 8;
  int ffn_ratio = 4;
  int input_size = 256;
  // Upper bound on attention tokens, (input_size / 16)^2.
  int max_tokens = 1024;

  static ModelConfig full();
  // width 1/8, one block per stage, 4 heads, 64x64 input.
  static ModelConfig tiny();

  // Throws ConfigError naming the offending field.
  void validate() const;

  int channels(int full_scale) const;
  int stem_channels() const { return channels(64); }
  std::array<int, 3> stage_channels() const { return {channels(256), channels(512), channels(1024)}; }
  std::array<int, 4> decoder_channels() const {
    return {channels(256), channels(128), channels(64), channels(32)};
  }
  int bottleneck_channels() const { return channels(1024); }
  int bottleneck_size() const { return input_size / 16; }
  int tokens() const { return bottleneck_size() * bottleneck_size(); }
  // Channels handed to the first decoder block.
  int bridge_channels() const;

  // key=value lines; from_text accepts exactly the keys to_text writes.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  // Applies one key=value pair; returns false for keys it does not own.
  bool set(const std::string& key, const std::string& value);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// "0.125" or "1/8".
double parse_ratio(const std::string& text);
std::string format_double(double value);

}  // namespace trunet
