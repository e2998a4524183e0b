#include "trunet/train/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trunet/errors.hpp"
#include "trunet/rng.hpp"

namespace trunet {

SplitIndices split_indices(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
  if (n < 3) {
    throw DataError("split_dataset: need at least 3 samples for train/val/test, got " + std::to_string(n));
  }
  for (double r : ratios) {
    if (!(r > 0)) throw ConfigError("split_dataset: ratios must be positive");
  }
  const double total = ratios[0] + ratios[1] + ratios[2];
  auto part = [&](double r) {
    const auto k = static_cast<std::size_t>(std::floor(r / total * static_cast<double>(n) + 1e-9));
    return std::max<std::size_t>(1, k);
  };
  const std::size_t n_val = part(ratios[1]);
  const std::size_t n_test = part(ratios[2]);
  if (n_val + n_test >= n) {
    throw DataError("split_dataset: " + std::to_string(n) + " samples leave no training data");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  SplitIndices out;
  const std::size_t n_train = n - n_val - n_test;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

}  // namespace trunet
