#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "naive.hpp"
#include "trunet/errors.hpp"
#include "trunet/metrics/bench.hpp"
#include "trunet/metrics/heatmap.hpp"
#include "trunet/metrics/metrics.hpp"
#include "trunet/metrics/report.hpp"

using namespace trunet;

namespace {

Tensor<float> bits(std::vector<float> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor<float>({1, 1, n}, std::move(v));
}

// direct tally
ConfusionCounts tally(const Tensor<float>& p, const Tensor<float>& m) {
  ConfusionCounts c;
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    if (p[i] == 1 && m[i] == 1) ++c.tp;
    if (p[i] == 1 && m[i] == 0) ++c.fp;
    if (p[i] == 0 && m[i] == 0) ++c.tn;
    if (p[i] == 0 && m[i] == 1) ++c.fn;
  }
  return c;
}

Tensor<float> random_mask(Rng& rng, Shape s, double density) {
  auto t = oracle::random_tensor<float>(std::move(s), rng, 0, 1);
  for (auto& v : t.data()) v = v < density ? 1.0f : 0.0f;
  return t;
}

}  // namespace

TEST(Binarize, ThresholdIsInclusive) {
  EXPECT_EQ(binarize(bits({0.49f, 0.5f, 0.51f, 0.0f})), bits({0, 1, 1, 0}));
  EXPECT_EQ(binarize(bits({0.29f, 0.3f}), 0.3), bits({0, 1}));
}

TEST(Confusion, HandExample) {
  const auto c = confusion(bits({1, 1, 0, 0, 1}), bits({1, 0, 0, 1, 1}));
  EXPECT_EQ(c, (ConfusionCounts{2, 1, 1, 1}));
  EXPECT_EQ(c.total(), 5);
}

TEST(Confusion, MatchesDirectTally) {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const Shape s{1, oracle::rand_int(rng, 1, 9), oracle::rand_int(rng, 1, 9)};
    const auto p = random_mask(rng, s, rng.uniform(0, 1));
    const auto m = random_mask(rng, s, rng.uniform(0, 1));
    ASSERT_EQ(confusion(p, m), tally(p, m));
  }
}

TEST(Confusion, RejectsNonBinaryOrMismatched) {
  EXPECT_ANY_THROW(confusion(bits({0.5f, 1}), bits({1, 1})));
  EXPECT_ANY_THROW(confusion(bits({1, 1}), bits({1, 1, 0})));
}

TEST(Metrics, OneOfEach) {
  const auto m = compute_metrics({1, 1, 1, 1});
  EXPECT_NEAR(m.dsc, 0.5, 1e-12);
  EXPECT_NEAR(m.iou, 1.0 / 3, 1e-12);
  EXPECT_NEAR(m.recall, 0.5, 1e-12);
  EXPECT_NEAR(m.precision, 0.5, 1e-12);
  EXPECT_NEAR(m.accuracy, 0.5, 1e-12);
  EXPECT_NEAR(m.f2, 0.5, 1e-12);
}

TEST(Metrics, F2FavoursRecall) {
  // P = 0.5, R = 1
  const auto m = compute_metrics({1, 1, 0, 0});
  EXPECT_NEAR(m.f2, 5.0 / 6, 1e-12);
  EXPECT_GT(m.f2, m.dsc);
  // P = 1, R = 0.5
  const auto r = compute_metrics({1, 0, 0, 1});
  EXPECT_LT(r.f2, r.dsc);
}

TEST(Metrics, PerfectAndEmpty) {
  const auto p = compute_metrics({5, 0, 7, 0});
  for (double v : {p.dsc, p.iou, p.recall, p.precision, p.accuracy, p.f2}) EXPECT_EQ(v, 1.0);
  const auto e = compute_metrics({0, 0, 9, 0});
  EXPECT_NEAR(e.dsc, 1.0, 1e-12);
  EXPECT_NEAR(e.iou, 1.0, 1e-12);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_EQ(e.accuracy, 1.0);
}

TEST(Metrics, DiceIouIdentity) {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    ConfusionCounts c{static_cast<std::int64_t>(rng.below(50)) + 1, static_cast<std::int64_t>(rng.below(50)),
                      static_cast<std::int64_t>(rng.below(50)), static_cast<std::int64_t>(rng.below(50))};
    const auto m = compute_metrics(c);
    EXPECT_NEAR(m.dsc, 2 * m.iou / (1 + m.iou), 1e-12);
    for (double v : {m.dsc, m.iou, m.recall, m.precision, m.accuracy, m.f2}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Report, PerImageMeanIsOrderInvariant) {
  std::vector<ConfusionCounts> c{{4, 1, 10, 0}, {0, 3, 2, 5}, {7, 0, 1, 2}};
  const auto a = make_report(c);
  std::swap(c[0], c[2]);
  const auto b = make_report(c);
  EXPECT_NEAR(a.mean.dsc, b.mean.dsc, 1e-15);
  EXPECT_NEAR(a.mean.f2, b.mean.f2, 1e-15);
  double dsc = 0;
  for (const auto& x : c) dsc += compute_metrics(x).dsc;
  EXPECT_NEAR(a.mean.dsc, dsc / 3, 1e-12);
  EXPECT_EQ(a.image_count(), 3);
}

TEST(Report, PooledSumsCounts) {
  const std::vector<ConfusionCounts> c{{4, 1, 10, 0}, {0, 3, 2, 5}};
  const auto r = make_report(c, Aggregation::kPooled);
  const auto want = compute_metrics({4, 4, 12, 5});
  EXPECT_NEAR(r.mean.dsc, want.dsc, 1e-15);
  EXPECT_NEAR(r.mean.accuracy, want.accuracy, 1e-15);
  EXPECT_NE(r.mean.dsc, make_report(c).mean.dsc);
}

TEST(Report, FourDecimalRounding) {
  EXPECT_EQ(format_4dp(0.12345), "0.1235");
  EXPECT_EQ(format_4dp(0.12344), "0.1234");
  EXPECT_EQ(format_4dp(1.0), "1.0000");
  EXPECT_EQ(format_4dp(0.0), "0.0000");
  EXPECT_EQ(format_4dp(123.45678), "123.4568");
}

TEST(Report, CsvAndMarkdownAgree) {
  MetricsReport a = make_report({{4, 1, 10, 0}, {3, 0, 2, 1}});
  MetricsReport b = make_report({{1, 0, 0, 0}});
  b.method = "oracle";
  a.fps = 12.5;
  const auto csv = render_report({a, b}, ReportFormat::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "Method,DSC,mIoU,Recall,Precision,Accuracy,F2,FPS");
  const auto rows = parse_report_csv(csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].method, "TransResU-Net");
  EXPECT_NEAR(rows[0].values[0], a.mean.dsc, 5e-5);
  EXPECT_EQ(rows[0].values[6], 12.5);
  EXPECT_TRUE(std::isnan(rows[1].values[6]));
  EXPECT_EQ(rows[1].values[0], 1.0);

  const auto md = render_report({a, b}, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| --- |"), std::string::npos);
  // Same cells, different separators.
  std::string line = md.substr(md.find("| oracle"));
  line = line.substr(0, line.find('\n'));
  std::string expect = "| " + csv.substr(csv.find("oracle"));
  expect = expect.substr(0, expect.find('\n'));
  for (std::size_t at; (at = expect.find(',')) != std::string::npos;) expect.replace(at, 1, " | ");
  EXPECT_EQ(line, expect + " |");
}

TEST(Bench, FpsFromTiming) {
  EXPECT_EQ(fps_from_timing(10, 0.5), 20.0);
  EXPECT_THROW(fps_from_timing(0, 1.0), ShapeError);
  EXPECT_THROW(fps_from_timing(5, 0.0), ShapeError);
}

TEST(Bench, TimesRequestedFrames) {
  int calls = 0;
  const auto r = fps_benchmark([&] { ++calls; std::this_thread::sleep_for(std::chrono::milliseconds(2)); }, 3, 7);
  EXPECT_EQ(calls, 10);
  EXPECT_EQ(r.frames, 7);
  EXPECT_EQ(r.latencies_s.size(), 7u);
  EXPECT_GT(r.mean_latency_s, 0.0019);
  EXPECT_NEAR(r.fps, 1.0 / r.mean_latency_s, 1e-9 * r.fps);
  EXPECT_FALSE(r.coarse_timer);
}

TEST(Heatmap, ColorRamp) {
  EXPECT_EQ(heat_color(0), (std::array<float, 3>{0, 0, 1}));
  EXPECT_EQ(heat_color(0.5), (std::array<float, 3>{0, 1, 0}));
  EXPECT_EQ(heat_color(1), (std::array<float, 3>{1, 0, 0}));
  EXPECT_EQ(heat_color(7), heat_color(1));
}

TEST(Heatmap, ConstantMapIsBlue) {
  const auto h = activation_heatmap(Tensor<float>({4, 3, 3}, 2.5f), 6);
  ASSERT_EQ(h.shape(), (Shape{3, 6, 6}));
  for (std::int64_t i = 0; i < 36; ++i) {
    EXPECT_EQ(h[i], 0.0f);
    EXPECT_EQ(h[36 + i], 0.0f);
    EXPECT_EQ(h[72 + i], 1.0f);
  }
}

TEST(Heatmap, HotPixelIsRedAndMinIsBlue) {
  Tensor<double> f({2, 4, 4});  // flat (c*4 + y)*4 + x
  f[6] = 10;
  f[22] = 6;
  f[15] = -4;
  const auto h = activation_heatmap(f, 4);
  EXPECT_EQ((std::array<float, 3>{h[6], h[22], h[38]}), (std::array<float, 3>{1, 0, 0}));
  EXPECT_EQ((std::array<float, 3>{h[15], h[31], h[47]}), (std::array<float, 3>{0, 0, 1}));
  // Scaling the features does not change the picture.
  Tensor<double> g = f;
  for (auto& v : g.data()) v = 3 * v + 1;
  EXPECT_EQ(activation_heatmap(g, 4), h);
}
