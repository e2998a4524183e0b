#include "trunet/metrics/bench.hpp"

#include <algorithm>
#include <chrono>

#include "trunet/errors.hpp"

namespace trunet {

double fps_from_timing(int frames, double seconds) {
  if (frames < 1) throw ShapeError("fps: frames must be >= 1");
  if (!(seconds > 0)) throw ShapeError("fps: elapsed time must be positive");
  return static_cast<double>(frames) / seconds;
}

FpsReport fps_benchmark(const std::function<void()>& forward, int warmup, int frames) {
  if (frames < 1) throw ShapeError("fps_benchmark: frames must be >= 1");
  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) forward();
  FpsReport report;
  report.frames = frames;
  double total = 0;
  for (int i = 0; i < frames; ++i) {
    const auto start = Clock::now();
    forward();
    const double dt = std::chrono::duration<double>(Clock::now() - start).count();
    report.latencies_s.push_back(dt);
    total += dt;
  }
  const double tick = static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);
  const double fastest = *std::min_element(report.latencies_s.begin(), report.latencies_s.end());
  report.coarse_timer = fastest <= tick;
  report.fps = fps_from_timing(frames, std::max(total, tick));
  report.mean_latency_s = total / frames;
  return report;
}

}  // namespace trunet
