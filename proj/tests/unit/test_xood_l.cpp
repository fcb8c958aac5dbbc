#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "generators.hpp"
#include "oracles.hpp"
#include "xood/data.hpp"
#include "xood/error.hpp"
#include "xood/xood_l.hpp"

using namespace xood;

namespace {

struct Problem {
  Matrix x;
  std::vector<double> y;
};

// Overlapping classes so the unregularised optimum is finite.
Problem random_problem(Rng& rng, std::size_t n, std::size_t p) {
  Problem pr{gen::gaussian_matrix(rng, n, p), std::vector<double>(n)};
  std::vector<double> beta(p);
  for (auto& b : beta) b = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    double z = rng.normal(0.0, 0.3);
    for (std::size_t j = 0; j < p; ++j) z += beta[j] * pr.x(i, j);
    pr.y[i] = rng.uniform() < sigmoid(z) ? 1.0 : 0.0;
  }
  pr.y[0] = 0.0;
  pr.y[1] = 1.0;
  return pr;
}

double inf_norm(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Split, IdentitiesHoldExactly) {
  Rng rng(1);
  const std::size_t d = 10;
  SplitScaler s;
  s.center.resize(d);
  for (auto& c : s.center) c = rng.normal(0.0, 5.0);
  std::vector<double> m(d), out(2 * d);
  for (int k = 0; k < 10000; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      // mix in exact hits on the centre
      m[i] = rng.below(20) == 0 ? s.center[i] : rng.normal(0.0, 10.0);
    }
    s.split_row(m, out);
    for (std::size_t i = 0; i < d; ++i) {
      const double plus = out[2 * i], minus = out[2 * i + 1];
      ASSERT_EQ(plus - minus, m[i] - s.center[i]);
      ASSERT_EQ(plus * minus, 0.0);
      ASSERT_GE(plus, 0.0);
      ASSERT_GE(minus, 0.0);
    }
  }
}

TEST(Split, ScaleUsesFitMatrixAndCentreFromMeansSource) {
  Rng rng(2);
  const auto fit = gen::gaussian_matrix(rng, 200, 3);
  const auto src = gen::correlated_matrix(rng, 50, 3);
  const auto scaled = split_and_scale(fit, src);
  EXPECT_EQ(scaled.scaler.center, column_means(src));
  EXPECT_EQ(scaled.features.cols(), 6u);
  for (std::size_t j = 0; j < 6; ++j) {
    const auto c = scaled.features.column(j);
    const double mean = std::accumulate(c.begin(), c.end(), 0.0) / 200.0;
    double var = 0;
    for (double v : c) var += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    if (!scaled.scaler.flagged[j]) {
      EXPECT_NEAR(var / 200.0, 1.0, 1e-9);
    }
  }
  // transform reproduces the scaled training matrix
  EXPECT_EQ(scaled.scaler.transform(fit), scaled.features);
}

TEST(Split, ColumnThatNeverFiresIsFlagged) {
  Matrix fit(20, 1);
  for (std::size_t i = 0; i < 20; ++i) fit(i, 0) = 1.0 + static_cast<double>(i);
  Matrix src(5, 1, 0.0);
  const auto scaled = split_and_scale(fit, src);
  EXPECT_FALSE(scaled.scaler.flagged[0]);
  EXPECT_TRUE(scaled.scaler.flagged[1]);
}

TEST(LogReg, AnalyticGradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int c = 0; c < 50; ++c) {
    const std::size_t p = 1 + rng.below(6);
    const auto pr = random_problem(rng, 40 + rng.below(80), p);
    const double lambda = std::pow(10.0, rng.uniform(-3, 1));
    std::vector<double> w(p + 1);
    for (auto& v : w) v = rng.normal();
    const auto g = logreg_gradient(pr.x, pr.y, w, lambda);
    const auto fd = oracle::logreg_gradient_fd(pr.x, pr.y, w, lambda, 1e-5);
    for (std::size_t k = 0; k <= p; ++k) ASSERT_NEAR(g[k], fd[k], 1e-3 * std::max(std::abs(fd[k]), 1e-3)) << "case " << c;
    EXPECT_NEAR(logreg_objective(pr.x, pr.y, w, lambda), oracle::logreg_objective(pr.x, pr.y, w, lambda), 1e-12);
  }
}

TEST(LogReg, SolutionIsStationary) {
  Rng rng(4);
  for (int c = 0; c < 50; ++c) {
    const std::size_t p = 1 + rng.below(8);
    const auto pr = random_problem(rng, 60 + rng.below(200), p);
    const double lambda = std::pow(10.0, rng.uniform(-3, 3));
    const auto fit = fit_logreg(pr.x, pr.y, lambda);
    ASSERT_TRUE(fit.converged) << "case " << c;
    EXPECT_LT(inf_norm(logreg_gradient(pr.x, pr.y, fit.weights, lambda)), 1e-6);
    EXPECT_LT(inf_norm(oracle::logreg_gradient_fd(pr.x, pr.y, fit.weights, lambda, 1e-5)), 1e-6);
  }
}

TEST(LogReg, SeparableDataStaysFiniteUnderRegularisation) {
  Matrix x(6, 1, std::vector<double>{-3, -2, -1, 1, 2, 3});
  std::vector<double> y{0, 0, 0, 1, 1, 1};
  const auto fit = fit_logreg(x, y, 1e-3);
  EXPECT_TRUE(fit.converged);
  EXPECT_TRUE(std::isfinite(fit.weights[1]));
  EXPECT_GT(fit.weights[1], 0.0);
}

TEST(LogReg, Contracts) {
  Matrix x(3, 1, std::vector<double>{1, 2, 3});
  EXPECT_THROW(fit_logreg(x, std::vector<double>{1, 1, 1}, 1.0), ContractError);
  EXPECT_THROW(fit_logreg(x, std::vector<double>{0, 2, 1}, 1.0), ContractError);
  EXPECT_THROW(fit_logreg(x, std::vector<double>{0, 1, 1}, -1.0), ConfigError);
}

TEST(LogReg, ScoreOrderingFollowsLinearOrdering) {
  Rng rng(5);
  LDetector det;
  det.scaler.center = {0.0, 1.0};
  det.scaler.scale_mean = {0.1, 0.2, 0.3, 0.4};
  det.scaler.scale_std = {1.0, 2.0, 0.5, 1.5};
  det.scaler.flagged.assign(4, false);
  det.weights = {0.3, 1.0, -2.0, 0.5, 0.7};
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> x{rng.normal(0.0, 4.0), rng.normal(0.0, 4.0)};
    pairs.emplace_back(det.linear(x), score_l(det, x));
  }
  std::sort(pairs.begin(), pairs.end());
  for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_GE(pairs[i].second, pairs[i - 1].second);
  for (const auto& pr : pairs) {
    EXPECT_GE(pr.second, 0.0);
    EXPECT_LE(pr.second, 1.0);
  }
}

TEST(CrossValidate, EveryCellEvaluatedAndDeterministic) {
  Rng rng(6);
  const auto pr = random_problem(rng, 250, 4);
  std::vector<std::uint32_t> fold(250);
  for (std::size_t i = 0; i < 250; ++i) fold[i] = static_cast<std::uint32_t>(i % 5);
  const auto grid = default_lambda_grid();
  const auto a = cross_validate(pr.x, pr.y, fold, grid);
  const auto b = cross_validate(pr.x, pr.y, fold, grid);
  EXPECT_EQ(a.rounds_per_lambda, 5u);
  ASSERT_EQ(a.fold_loss.rows(), grid.size());
  ASSERT_EQ(a.fold_loss.cols(), 5u);
  for (double v : a.fold_loss.storage()) EXPECT_TRUE(std::isfinite(v) && v > 0.0);
  EXPECT_EQ(a.fold_loss, b.fold_loss);
  EXPECT_EQ(a.best_lambda, b.best_lambda);
  const auto best = std::min_element(a.mean_loss.begin(), a.mean_loss.end()) - a.mean_loss.begin();
  EXPECT_EQ(a.best_lambda, grid[static_cast<std::size_t>(best)]);
}

TEST(CrossValidate, TiesGoToLargerLambda) {
  // constant features: every lambda yields the same intercept-only model
  Matrix x(40, 2, 0.0);
  std::vector<double> y(40);
  std::vector<std::uint32_t> fold(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = i % 3 == 0 ? 1.0 : 0.0;
    fold[i] = static_cast<std::uint32_t>(i % 4);
  }
  const std::vector<double> grid{0.1, 1.0, 10.0};
  EXPECT_EQ(cross_validate(x, y, fold, grid).best_lambda, 10.0);
}

TEST(TrainingSet, FiveSourcesWithFourDistortions) {
  const auto ds = gen_blobs(400, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto net = train_reference_cnn(ds.images, *ds.labels, 2, cfg).network;
  const auto cal = gen_blobs(60, 4);
  const auto pass = compute_features(net, ds.images, FeatureKind::min_max());
  const auto pt = fit_power_transform(pass.features);
  const auto set = build_training_set(net, cal, pt, FeatureKind::min_max(), 11);
  EXPECT_EQ(set.features.rows(), 300u);
  EXPECT_EQ(set.fold_names,
            (std::vector<std::string>{"calibration", "geometric", "mixup", "noise", "blur"}));
  for (std::uint32_t f = 0; f < 5; ++f) EXPECT_EQ(std::count(set.fold_id.begin(), set.fold_id.end(), f), 60);
  for (double v : set.labels) EXPECT_TRUE(v == 0.0 || v == 1.0);
  const auto again = build_training_set(net, cal, pt, FeatureKind::min_max(), 11);
  EXPECT_EQ(again.features, set.features);
}

TEST(LDetectorFile, BundleRoundTrip) {
  LDetector det;
  det.scaler.center = {0.5, -1.0};
  det.scaler.scale_mean = {0.125, 0.25, 0.375, 0.5};
  det.scaler.scale_std = {1.0, 2.0, 1.0, 0.5};
  det.scaler.flagged = {false, true, false, false};
  det.weights = {0.125, 1.0, -2.0, 0.5, 0.75};
  det.lambda = 0.1;
  det.threshold = 0.75;
  Bundle b;
  b.magic = "XDET";
  write_l_detector(b, det);
  const auto back = read_l_detector(decode_bundle(encode_bundle(b), "XDET"));
  EXPECT_EQ(back.scaler, det.scaler);
  EXPECT_EQ(back.weights, det.weights);
  EXPECT_EQ(back.lambda, det.lambda);
  EXPECT_EQ(back.threshold, det.threshold);
}
