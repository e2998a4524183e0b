#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trunet/tensor.hpp"

namespace trunet {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricSet {
  double dsc = 0, iou = 0, recall = 0, precision = 0, accuracy = 0, f2 = 0;
};

inline constexpr double kMetricEps = 1e-7;
inline constexpr double kDefaultThreshold = 0.5;

// >= threshold -> 1, else 0.
template <typename T>
Tensor<T> binarize(const Tensor<T>& pred, double threshold = kDefaultThreshold);

// Pixel tallies of two equally shaped binary tensors.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred_bin, const Tensor<T>& mask);

/// DSC, IoU, recall, precision, accuracy and F2 of one image. A ratio whose
/// denominator is zero is evaluated as (num + eps) / (den + eps), so an empty
/// prediction on an empty mask scores DSC = IoU = 1 and recall = 0.
MetricSet compute_metrics(const ConfusionCounts& counts, double eps = kMetricEps);

enum class Aggregation {
  kPerImageMean,  // unweighted mean of per-image values
  kPooled,        // metrics of the summed confusion counts
};

struct MetricsReport {
  std::string method = "TransResU-Net";
  std::vector<ConfusionCounts> counts;
  std::vector<MetricSet> per_image;
  MetricSet mean;
  std::optional<double> fps;

  std::int64_t image_count() const { return static_cast<std::int64_t>(counts.size()); }
};

MetricsReport make_report(std::vector<ConfusionCounts> counts,
                          Aggregation aggregation = Aggregation::kPerImageMean,
                          double eps = kMetricEps);

}  // namespace trunet
