#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "trunet/io/sample.hpp"
#include "trunet/metrics/metrics.hpp"
#include "trunet/model/model.hpp"

namespace trunet {

struct TrainConfig {
  double lr = 1e-4;
  int batch = 16;
  int epochs = 200;
  // Non-improving validation epochs tolerated before stopping.
  int patience = 20;
  std::uint64_t seed = 0;

  static TrainConfig tiny();

  void validate() const;
  // key=value lines, including the fixed loss=bce+dice entry.
  std::string to_text() const;
  bool set(const std::string& key, const std::string& value);
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  double seconds = 0;
};

// epoch,train_loss,val_loss,lr. Wall time is left out so reruns compare equal.
std::string history_csv(const std::vector<EpochRecord>& history);

template <typename T>
struct TrainResult {
  ParameterStore<T> best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::int64_t steps = 0;
  bool stopped_early = false;
};

// Called after each epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Stacks samples into (N,3,S,S) images and (N,1,S,S) masks.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<Sample>& samples,
                                           const std::vector<std::size_t>& indices);

/// Minibatch Adam on train, validation loss per epoch, early stopping on the
/// validation loss with best-epoch parameters restored.
template <typename T>
TrainResult<T> train(const TransResUNet<T>& model, const std::vector<Sample>& train_set,
                     const std::vector<Sample>& val_set, const TrainConfig& config,
                     std::type_identity_t<std::optional<ParameterStore<T>>> initial = std::nullopt,
                     const EpochCallback& on_epoch = {});

template <typename T>
struct EvalResult {
  double mean_loss = 0;
  MetricsReport report;
};

// Eval-mode forward over `data`; parameters are left untouched.
template <typename T>
EvalResult<T> evaluate(const TransResUNet<T>& model, const ParameterStore<T>& params,
                       const std::vector<Sample>& data, int batch = 8, double threshold = 0.5);

// Eval-mode probabilities (N,1,S,S) for a batch of images.
template <typename T>
Tensor<T> predict(const TransResUNet<T>& model, const ParameterStore<T>& params,
                  const Tensor<T>& images);

}  // namespace trunet
