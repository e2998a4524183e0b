#include "trunet/metrics/metrics.hpp"

#include "trunet/errors.hpp"

namespace trunet {

template <typename T>
Tensor<T> binarize(const Tensor<T>& pred, double threshold) {
  if (!(threshold > 0 && threshold < 1)) throw ShapeError("binarize: threshold must be in (0, 1)");
  Tensor<T> out(pred.shape());
  for (std::int64_t i = 0; i < pred.numel(); ++i) out[i] = pred[i] >= threshold ? T(1) : T(0);
  return out;
}

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred_bin, const Tensor<T>& mask) {
  if (pred_bin.shape() != mask.shape()) {
    throw ShapeError("confusion: prediction " + shape_str(pred_bin.shape()) + " vs mask " +
                     shape_str(mask.shape()));
  }
  ConfusionCounts c;
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    const T p = pred_bin[i], m = mask[i];
    if ((p != T(0) && p != T(1)) || (m != T(0) && m != T(1))) {
      throw ShapeError("confusion: inputs must be binary (element " + std::to_string(i) + ")");
    }
    if (p == T(1)) {
      m == T(1) ? ++c.tp : ++c.fp;
    } else {
      m == T(1) ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

namespace {

// eps enters only when the denominator vanishes.
double ratio(double num, double den, double eps) { return den > 0 ? num / den : (num + eps) / (den + eps); }

}  // namespace

MetricSet compute_metrics(const ConfusionCounts& c, double eps) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  MetricSet m;
  m.dsc = ratio(2 * tp, 2 * tp + fp + fn, eps);
  m.iou = ratio(tp, tp + fp + fn, eps);
  // Zero numerators keep recall/precision at 0 for empty denominators.
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double total = static_cast<double>(c.total());
  m.accuracy = total > 0 ? (tp + tn) / total : 0.0;
  const double f_den = 4 * m.precision + m.recall;
  m.f2 = f_den > 0 ? 5 * m.precision * m.recall / f_den : 0.0;
  return m;
}

MetricsReport make_report(std::vector<ConfusionCounts> counts, Aggregation aggregation, double eps) {
  MetricsReport r;
  r.counts = std::move(counts);
  for (const auto& c : r.counts) r.per_image.push_back(compute_metrics(c, eps));
  if (r.counts.empty()) return r;
  if (aggregation == Aggregation::kPooled) {
    ConfusionCounts pooled;
    for (const auto& c : r.counts) {
      pooled.tp += c.tp;
      pooled.fp += c.fp;
      pooled.tn += c.tn;
      pooled.fn += c.fn;
    }
    r.mean = compute_metrics(pooled, eps);
    return r;
  }
  const double n = static_cast<double>(r.per_image.size());
  for (const auto& m : r.per_image) {
    r.mean.dsc += m.dsc / n;
    r.mean.iou += m.iou / n;
    r.mean.recall += m.recall / n;
    r.mean.precision += m.precision / n;
    r.mean.accuracy += m.accuracy / n;
    r.mean.f2 += m.f2 / n;
  }
  return r;
}

template Tensor<float> binarize<float>(const Tensor<float>&, double);
template Tensor<double> binarize<double>(const Tensor<double>&, double);
template ConfusionCounts confusion<float>(const Tensor<float>&, const Tensor<float>&);
template ConfusionCounts confusion<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace trunet
