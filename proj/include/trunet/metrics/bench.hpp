#pragma once

#include <functional>
#include <vector>

namespace trunet {

struct FpsReport {
  double fps = 0;
  double mean_latency_s = 0;
  std::vector<double> latencies_s;
  int frames = 0;
  // Clock tick is coarser than the fastest measured frame.
  bool coarse_timer = false;
};

// frames / (total seconds); throws ShapeError for frames < 1 or seconds <= 0.
double fps_from_timing(int frames, double seconds);

/// Times `frames` sequential calls of `forward` after `warmup` untimed calls.
FpsReport fps_benchmark(const std::function<void()>& forward, int warmup = 5, int frames = 30);

}  // namespace trunet
