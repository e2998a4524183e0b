#include "trunet/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "trunet/errors.hpp"
#include "trunet/model/config.hpp"
#include "trunet/rng.hpp"
#include "trunet/train/adam.hpp"
#include "trunet/train/loss.hpp"

namespace trunet {

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.batch = 4;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (patience < 0 || patience > epochs) throw ConfigError("patience must be in [0, epochs]");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lr=" << format_double(lr) << '\n'
     << "batch=" << batch << '\n'
     << "epochs=" << epochs << '\n'
     << "patience=" << patience << '\n'
     << "seed=" << seed << '\n'
     << "loss=bce+dice\n";
  return os.str();
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "lr") {
      lr = parse_ratio(value);
    } else if (key == "batch") {
      batch = std::stoi(value);
    } else if (key == "epochs") {
      epochs = std::stoi(value);
    } else if (key == "patience") {
      patience = std::stoi(value);
    } else if (key == "seed") {
      seed = std::stoull(value);
    } else if (key == "loss") {
      if (value != "bce+dice") throw ConfigError("loss: only 'bce+dice' is supported");
    } else {
      return false;
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(key + ": invalid value '" + value + "'");
  }
  return true;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,lr\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
       << format_double(r.lr) << '\n';
  }
  return os.str();
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<Sample>& samples,
                                           const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("make_batch: empty batch");
  const Sample& first = samples.at(indices.front());
  const std::int64_t h = first.image.dim(1), w = first.image.dim(2);
  const auto n = static_cast<std::int64_t>(indices.size());
  Tensor<T> images({n, 3, h, w});
  Tensor<T> masks({n, 1, h, w});
  for (std::int64_t b = 0; b < n; ++b) {
    const Sample& s = samples.at(indices[static_cast<std::size_t>(b)]);
    if (s.image.shape() != Shape{3, h, w} || s.mask.shape() != Shape{1, h, w}) {
      throw DataError("make_batch: sample '" + s.id + "' has image " + shape_str(s.image.shape()) +
                      " / mask " + shape_str(s.mask.shape()) + ", expected 3x" + std::to_string(h) +
                      "x" + std::to_string(w));
    }
    std::copy(s.image.data().begin(), s.image.data().end(), images.ptr() + b * 3 * h * w);
    std::copy(s.mask.data().begin(), s.mask.data().end(), masks.ptr() + b * h * w);
  }
  return {std::move(images), std::move(masks)};
}

namespace {

std::vector<std::vector<std::size_t>> batches_of(const std::vector<std::size_t>& order, int batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

// Distinct stream from parameter initialization, which uses the seed as is.
constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

template <typename T>
TrainResult<T> train(const TransResUNet<T>& model, const std::vector<Sample>& train_set,
                     const std::vector<Sample>& val_set, const TrainConfig& config,
                     std::type_identity_t<std::optional<ParameterStore<T>>> initial, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (val_set.empty()) throw DataError("train: empty validation set");

  TrainResult<T> result;
  ParameterStore<T> params = initial ? std::move(*initial) : model.init(config.seed);
  result.best = params;
  OptimizerState<T> optimizer;
  AdamOptions adam;
  adam.lr = config.lr;
  Rng rng(config.seed ^ kShuffleStream);
  double best_val = std::numeric_limits<double>::infinity();
  int non_improving = 0;

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double loss_sum = 0;
    std::int64_t batch_index = 0;
    for (const auto& idx : batches_of(order, config.batch)) {
      auto [images, masks] = make_batch<T>(train_set, idx);
      Graph<T> graph;
      ForwardContext<T> ctx(graph, params, NormMode::kTrain);
      ModelOutput<T> out = model.forward(ctx, graph.constant(std::move(images)));
      Var<T> loss = bce_dice_loss(out.probabilities, graph.constant(std::move(masks)));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index),
                             batch_index);
      }
      graph.backward(loss);
      adam_step(params, ctx.gradients(), optimizer, adam);
      ++result.steps;
      ++batch_index;
      loss_sum += value * static_cast<double>(idx.size());
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.val_loss = evaluate(model, params, val_set, config.batch).mean_loss;
    record.lr = config.lr;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(record.val_loss)) {
      throw NumericalError("non-finite validation loss in epoch " + std::to_string(epoch), -1);
    }
    result.history.push_back(record);

    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      result.best = params;
      result.best_epoch = epoch;
      non_improving = 0;
    } else {
      ++non_improving;
    }
    const bool keep_going = on_epoch ? on_epoch(record) : true;
    if (non_improving > config.patience) {
      result.stopped_early = true;
      break;
    }
    if (!keep_going) break;
  }
  return result;
}

template <typename T>
Tensor<T> predict(const TransResUNet<T>& model, const ParameterStore<T>& params, const Tensor<T>& images) {
  Graph<T> graph;
  NoGradGuard<T> no_grad(graph);
  // Eval mode reads the batch-norm statistics and never writes the store.
  ForwardContext<T> ctx(graph, const_cast<ParameterStore<T>&>(params), NormMode::kEval);
  return model.forward(ctx, graph.constant(images)).probabilities.value();
}

template <typename T>
EvalResult<T> evaluate(const TransResUNet<T>& model, const ParameterStore<T>& params,
                       const std::vector<Sample>& data, int batch, double threshold) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  if (batch < 1) throw ConfigError("evaluate: batch must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0;
  std::vector<ConfusionCounts> counts;
  for (const auto& idx : batches_of(order, batch)) {
    auto [images, masks] = make_batch<T>(data, idx);
    Graph<T> graph;
    NoGradGuard<T> no_grad(graph);
    ForwardContext<T> ctx(graph, const_cast<ParameterStore<T>&>(params), NormMode::kEval);
    ModelOutput<T> out = model.forward(ctx, graph.constant(images));
    Var<T> loss = bce_dice_loss(out.probabilities, graph.constant(masks));
    loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(idx.size());
    const Tensor<T>& prob = out.probabilities.value();
    const std::int64_t hw = prob.dim(2) * prob.dim(3);
    for (std::int64_t b = 0; b < prob.dim(0); ++b) {
      Tensor<T> p({1, prob.dim(2), prob.dim(3)});
      Tensor<T> m({1, prob.dim(2), prob.dim(3)});
      std::copy_n(prob.ptr() + b * hw, hw, p.ptr());
      std::copy_n(masks.ptr() + b * hw, hw, m.ptr());
      counts.push_back(confusion(binarize(p, threshold), m));
    }
  }
  EvalResult<T> result;
  result.mean_loss = loss_sum / static_cast<double>(data.size());
  result.report = make_report(std::move(counts));
  return result;
}

#define TRUNET_INSTANTIATE(T)                                                                       \
  template std::pair<Tensor<T>, Tensor<T>> make_batch<T>(const std::vector<Sample>&,               \
                                                         const std::vector<std::size_t>&);         \
  template TrainResult<T> train<T>(const TransResUNet<T>&, const std::vector<Sample>&,             \
                                   const std::vector<Sample>&, const TrainConfig&,                 \
                                   std::optional<ParameterStore<T>>, const EpochCallback&);        \
  template Tensor<T> predict<T>(const TransResUNet<T>&, const ParameterStore<T>&, const Tensor<T>&); \
  template EvalResult<T> evaluate<T>(const TransResUNet<T>&, const ParameterStore<T>&,             \
                                     const std::vector<Sample>&, int, double);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)
#undef TRUNET_INSTANTIATE

}  // namespace trunet
