#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <numeric>

#include "generators.hpp"
#include "oracles.hpp"
#include "xood/error.hpp"
#include "xood/metrics.hpp"

using namespace xood;

namespace {

std::vector<double> normal_scores(Rng& rng, std::size_t n, double mean) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(mean, 1.0);
  return v;
}

}  // namespace

TEST(Auroc, MatchesPairwiseOracleWithTies) {
  Rng rng(1);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n_id = 1 + rng.below(100), n_ood = 1 + rng.below(100);
    std::vector<double> id, ood;
    if (c % 2 == 0) {
      id = gen::tied_scores(rng, n_id, 1 + static_cast<int>(rng.below(6)), 0.5);
      ood = gen::tied_scores(rng, n_ood, 1 + static_cast<int>(rng.below(6)), 0.0);
    } else {
      id = normal_scores(rng, n_id, 0.7);
      ood = normal_scores(rng, n_ood, 0.0);
    }
    const auto s = ScoredSet::from(id, ood);
    EXPECT_NEAR(auroc(s), oracle::auroc_pairwise(id, ood), 1e-12) << "case " << c;
  }
}

TEST(Auroc, PerfectAndReversed) {
  std::vector<double> id{5, 6, 7}, ood{1, 2};
  EXPECT_EQ(auroc(ScoredSet::from(id, ood)), 1.0);
  EXPECT_EQ(auroc(ScoredSet::from(ood, id)), 0.0);
  std::vector<double> same{1, 1};
  EXPECT_EQ(auroc(ScoredSet::from(same, same)), 0.5);
}

TEST(Auroc, NegationComplementsOnTieFreeSets) {
  Rng rng(2);
  for (int c = 0; c < 30; ++c) {
    auto id = normal_scores(rng, 50, 0.5), ood = normal_scores(rng, 60, 0.0);
    const double a = auroc(ScoredSet::from(id, ood));
    for (auto& v : id) v = -v;
    for (auto& v : ood) v = -v;
    EXPECT_NEAR(auroc(ScoredSet::from(id, ood)), 1.0 - a, 1e-12);
  }
}

TEST(Metrics, InvariantUnderIncreasingTransforms) {
  Rng rng(3);
  auto id = normal_scores(rng, 120, 1.0), ood = normal_scores(rng, 80, 0.0);
  const auto s = ScoredSet::from(id, ood);
  for (auto& v : id) v = std::exp(v) * 3.0 - 1.0;
  for (auto& v : ood) v = std::exp(v) * 3.0 - 1.0;
  const auto t = ScoredSet::from(id, ood);
  EXPECT_NEAR(auroc(s), auroc(t), 1e-12);
  EXPECT_EQ(tnr_at_95tpr(s), tnr_at_95tpr(t));
  EXPECT_EQ(detection_accuracy(s), detection_accuracy(t));
}

TEST(DetectionAccuracy, MatchesMidpointSweepOracle) {
  Rng rng(4);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n_id = 1 + rng.below(100), n_ood = 1 + rng.below(100);
    auto id = c % 2 ? normal_scores(rng, n_id, 0.8) : gen::tied_scores(rng, n_id, 4, 0.3);
    auto ood = c % 2 ? normal_scores(rng, n_ood, 0.0) : gen::tied_scores(rng, n_ood, 4, 0.0);
    EXPECT_NEAR(detection_accuracy(ScoredSet::from(id, ood)), oracle::detection_accuracy_sweep(id, ood), 1e-12);
  }
}

TEST(DetectionAccuracy, AtLeastAccuracyAtTheTprThreshold) {
  Rng rng(5);
  for (int c = 0; c < 30; ++c) {
    auto id = normal_scores(rng, 100, 1.0), ood = normal_scores(rng, 100, 0.0);
    const auto s = ScoredSet::from(id, ood);
    const double t = tpr_threshold(id);
    double tpr = 0, tnr = 0;
    for (double v : id) tpr += v > t;
    for (double v : ood) tnr += v <= t;
    EXPECT_GE(detection_accuracy(s) + 1e-12, 0.5 * (tpr / 100 + tnr / 100));
  }
}

TEST(Tnr, HandComputedTwentyPointSets) {
  // ID 1..20: sorted descending, index ceil(0.95 * 20) - 1 = 18 holds 2
  std::vector<double> id(20);
  std::iota(id.begin(), id.end(), 1.0);
  EXPECT_EQ(tpr_threshold(id), 2.0);
  std::vector<double> ood{0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 10.0, 25.0};
  // strictly below 2: 0.5, 1.0, 1.5
  EXPECT_DOUBLE_EQ(tnr_at_95tpr(ScoredSet::from(id, ood)), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(fpr_at_95tpr(ScoredSet::from(id, ood)), 5.0 / 8.0);

  // ties at the threshold: ID has three 7s around the cut
  std::vector<double> tied{7, 7, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24};
  EXPECT_EQ(tpr_threshold(tied), 7.0);
  std::vector<double> near{6.9, 7.0, 7.1};
  EXPECT_DOUBLE_EQ(tnr_at_95tpr(ScoredSet::from(tied, near)), 1.0 / 3.0);

  // ID with a low outlier: threshold ignores the single lowest point
  std::vector<double> outlier(20, 5.0);
  outlier[0] = -100.0;
  EXPECT_EQ(tpr_threshold(outlier), 5.0);
  std::vector<double> between{-50.0, 4.9, 5.0};
  EXPECT_DOUBLE_EQ(tnr_at_95tpr(ScoredSet::from(outlier, between)), 2.0 / 3.0);
}

TEST(Tnr, NeedsTwentyIdScores) {
  std::vector<double> id(19, 1.0), ood{0.0};
  EXPECT_THROW(tnr_at_95tpr(ScoredSet::from(id, ood)), ContractError);
}

TEST(Metrics, RejectEmptyOrNan) {
  std::vector<double> id{1.0}, none;
  EXPECT_THROW(auroc(ScoredSet::from(id, none)), ContractError);
  std::vector<double> nan{std::nan("")};
  EXPECT_THROW(auroc(ScoredSet::from(id, nan)), ContractError);
}

TEST(Msp, LargestProbability) {
  Tensor p({2, 3}, std::vector<float>{0.2f, 0.5f, 0.3f, 0.9f, 0.05f, 0.05f});
  const auto s = msp_baseline(p);
  EXPECT_NEAR(s[0], 0.5, 1e-7);
  EXPECT_NEAR(s[1], 0.9, 1e-7);
  Tensor bad({1, 2}, std::vector<float>{0.2f, 0.2f});
  EXPECT_THROW(msp_baseline(bad), ContractError);
}

TEST(Overhead, PaperArithmetic) {
  EXPECT_EQ(std::lround(100 * overhead(1.99, 1.45)), 37);
  EXPECT_EQ(overhead(2.0, 2.0), 0.0);
  EXPECT_THROW(overhead(1.0, 0.0), ContractError);
}

TEST(Histogram, CountsSumToN) {
  Rng rng(6);
  std::vector<double> v(1000);
  for (auto& x : v) x = rng.normal();
  const auto h = histogram(v, 17);
  EXPECT_EQ(h.edges.size(), 18u);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}), 1000u);
  EXPECT_EQ(h.edges.front(), *std::min_element(v.begin(), v.end()));
  EXPECT_EQ(h.edges.back(), *std::max_element(v.begin(), v.end()));
  const auto clamped = histogram(v, 4, -0.5, 0.5);
  EXPECT_EQ(std::accumulate(clamped.counts.begin(), clamped.counts.end(), std::size_t{0}), 1000u);
}

TEST(Histogram, HandCase) {
  std::vector<double> v{0, 1, 2, 3, 4};
  const auto h = histogram(v, 2);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{2, 3}));
}

TEST(Quantile, LowerOrderStatistic) {
  std::vector<double> v{5, 1, 4, 2, 3};
  EXPECT_EQ(lower_quantile(v, 0.0), 1.0);
  EXPECT_EQ(lower_quantile(v, 0.2), 1.0);
  EXPECT_EQ(lower_quantile(v, 0.21), 2.0);
  EXPECT_EQ(lower_quantile(v, 1.0), 5.0);
}

TEST(Timing, MeanAndInterval) {
  int calls = 0;
  const auto t = time_repeated([&] { ++calls; }, 7, 2);
  EXPECT_EQ(calls, 9);
  ASSERT_EQ(t.samples.size(), 7u);
  const double mean = std::accumulate(t.samples.begin(), t.samples.end(), 0.0) / 7;
  EXPECT_DOUBLE_EQ(t.mean, mean);
  double var = 0;
  for (double s : t.samples) var += (s - mean) * (s - mean);
  EXPECT_NEAR(t.ci99, 2.5758 * std::sqrt(var / 6) / std::sqrt(7.0), 1e-4 * t.ci99 + 1e-15);
}

TEST(FitLine, ExactLineAndOracleRSquared) {
  std::vector<double> x{8, 16, 32, 64}, y{1, 3, 7, 15};
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 0.25, 1e-12);
  EXPECT_NEAR(f.intercept, -1.0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  std::vector<double> noisy{1.2, 2.7, 7.4, 14.6};
  EXPECT_NEAR(fit_line(x, noisy).r_squared, oracle::r_squared(x, noisy), 1e-12);
}

TEST(MetricsCsv, RoundTripWithAverages) {
  std::vector<MetricsRow> rows{{"blobs", "uniform", "xood-m", 0.99, 0.97, 0.98, 0.03},
                               {"blobs", "gaussian", "xood-m", 0.97, 0.93, 0.96, 0.07},
                               {"blobs", "uniform", "msp", 0.8, 0.5, 0.7, 0.5}};
  const auto avg = average_rows(rows);
  ASSERT_EQ(avg.size(), 2u);
  EXPECT_EQ(avg[0].out_dist, "average");
  EXPECT_EQ(avg[0].method, "xood-m");
  EXPECT_NEAR(avg[0].fpr95, 0.05, 1e-12);
  EXPECT_NEAR(avg[1].auroc, 0.8, 1e-12);
  const auto dir = gen::scratch_dir("metricscsv");
  write_metrics_csv(dir / "m.csv", rows);
  const auto back = read_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].out_dist, "gaussian");
  EXPECT_EQ(back[1].tnr95, 0.93);
}

TEST(Timing, InterleavedRunsRoundRobin) {
  std::string order;
  std::vector<std::function<void()>> fns{[&] { order += 'a'; }, [&] { order += 'b'; }};
  const auto t = time_interleaved(fns, 3, 1);
  EXPECT_EQ(order, "abababab");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].samples.size(), 3u);
  EXPECT_EQ(t[1].samples.size(), 3u);
  EXPECT_THROW(time_interleaved(fns, 0, 0), ConfigError);
}
