#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "trunet/metrics/metrics.hpp"
#include "trunet/model/config.hpp"
#include "trunet/train/trainer.hpp"

namespace trunet {

/// Flat key=value run configuration: the model and training keys plus the
/// run keys below. Later sources override earlier ones:
/// defaults < config file < TRUN_<KEY> environment < command line flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_dir;          // empty: synthetic data
  int synth_n = 100;
  std::uint64_t synth_seed = 0;
  std::string out = "trunet_out";
  int precision = 32;            // 32 or 64
  double threshold = kDefaultThreshold;
  Aggregation aggregation = Aggregation::kPerImageMean;
  int eval_batch = 8;
  // Id files (see read_id_list) under data_dir's images/. Given together
  // they replace the seeded split, e.g. for an official train/test split.
  std::string train_list, val_list, test_list;

  bool has_lists() const { return !train_list.empty() || !val_list.empty() || !test_list.empty(); }

  // Throws ConfigError for unknown keys or bad values. Records the key as
  // explicitly set.
  void set(const std::string& key, const std::string& value);

  // key=value lines; blank lines and '#' comments skipped. `source` names
  // the input in error messages.
  void apply_text(const std::string& text, const std::string& source);
  void apply_file(const std::filesystem::path& path);
  // Entries named TRUN_<KEY>; the key is the lowercased remainder.
  void apply_env(const std::map<std::string, std::string>& env);

  void validate() const;
  // Every key with its current value; apply_text(to_text()) reproduces it.
  std::string to_text() const;

  bool is_explicit(const std::string& key) const { return explicit_.count(key) != 0; }
  const std::map<std::string, std::string>& explicit_keys() const { return explicit_; }

 private:
  std::map<std::string, std::string> explicit_;
};

inline constexpr const char* kEnvPrefix = "TRUN_";

// "per_image" or "pooled".
Aggregation parse_aggregation(const std::string& text);
const char* aggregation_name(Aggregation a);

}  // namespace trunet
