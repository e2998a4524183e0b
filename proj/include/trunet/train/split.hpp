#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace trunet {

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle, then val/test take floor(ratio * n) items each (at least
/// one), train keeps the rest. Needs n >= 3.
SplitIndices split_indices(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);

template <typename Item>
struct Split {
  std::vector<Item> train, val, test;
};

template <typename Item>
Split<Item> split_dataset(const std::vector<Item>& items, std::uint64_t seed,
                          std::array<double, 3> ratios = {0.8, 0.1, 0.1}) {
  const SplitIndices idx = split_indices(items.size(), ratios, seed);
  Split<Item> out;
  for (auto i : idx.train) out.train.push_back(items[i]);
  for (auto i : idx.val) out.val.push_back(items[i]);
  for (auto i : idx.test) out.test.push_back(items[i]);
  return out;
}

}  // namespace trunet
