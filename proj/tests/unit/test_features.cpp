#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "xood/error.hpp"
#include "xood/features.hpp"
#include "xood/power_transform.hpp"

using namespace xood;

TEST(Extract, MinMaxMatchesFlatScan) {
  Rng rng(1);
  const auto net = make_reference_cnn({1, 12, 12}, 2, 2);
  const auto x = gen::tensor(rng, {9, 1, 12, 12}, 0, 1);
  const auto r = forward_with_taps(net, x);
  const auto f = extract(r.trace, FeatureKind::min_max());
  const auto expected = oracle::tap_minmax(r.trace.taps);
  ASSERT_EQ(f.rows(), 9u);
  ASSERT_EQ(f.cols(), 2 * net.activation_count());
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) EXPECT_EQ(f(i, j), expected[i][j]);
}

TEST(Extract, OtherStatisticsOnHandCase) {
  const float a[] = {-2.0f, 1.0f, 3.0f, -1.0f};
  const float b[] = {0.5f, -0.5f};
  std::vector<std::span<const float>> layers{a, b};
  auto one = [&](const char* kind) { return extract_one(layers, FeatureKind::parse(kind)); };
  EXPECT_EQ(one("minmax"), (FeatureVector{-2, 3, -0.5, 0.5}));
  EXPECT_EQ(one("min"), (FeatureVector{-2, -0.5}));
  EXPECT_EQ(one("max"), (FeatureVector{3, 0.5}));
  EXPECT_EQ(one("positivity"), (FeatureVector{0.5, 0.5}));
  EXPECT_EQ(one("sum"), (FeatureVector{1, 0}));
  EXPECT_EQ(one("l1"), (FeatureVector{7, 1}));
  const auto l2 = one("l2");
  EXPECT_NEAR(l2[0], std::sqrt(15.0), 1e-12);
  const auto l3 = one("l3");
  EXPECT_NEAR(l3[0], std::cbrt(8.0 + 1 + 27 + 1), 1e-12);
  // positive part and negative part norms
  const auto s1 = one("split-l1");
  EXPECT_EQ(s1, (FeatureVector{4, 3, 0.5, 0.5}));
}

TEST(FeatureKind, NamesRoundTripAndWidths) {
  const auto kinds = all_feature_kinds();
  EXPECT_EQ(kinds.size(), 11u);
  for (const auto& k : kinds) {
    EXPECT_EQ(FeatureKind::parse(k.name()), k);
    EXPECT_EQ(k.column_names(3).size(), k.width(3));
  }
  EXPECT_EQ(FeatureKind::min_max().column_names(2),
            (std::vector<std::string>{"layer1_min", "layer1_max", "layer2_min", "layer2_max"}));
  EXPECT_THROW(FeatureKind::parse("l4"), ConfigError);
}

TEST(Extract, ComputeFeaturesIsBatchInvariant) {
  Rng rng(3);
  const auto net = make_reference_cnn({1, 12, 12}, 2, 3);
  const auto x = gen::tensor(rng, {10, 1, 12, 12}, 0, 1);
  const auto a = compute_features(net, x, FeatureKind::min_max(), 3);
  const auto b = compute_features(net, x, FeatureKind::min_max(), 256);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.predictions, b.predictions);
}

TEST(Extract, CorrectIndices) {
  const std::vector<std::uint32_t> p{0, 1, 1, 2}, y{0, 0, 1, 2};
  EXPECT_EQ(correct_indices(p, y), (std::vector<std::size_t>{0, 2, 3}));
}

TEST(FeatureCsv, RoundTrip) {
  Matrix m(2, 2, std::vector<double>{0.1, -3.25, 1e-17, 7});
  const auto dir = gen::scratch_dir("featcsv");
  write_feature_csv(dir / "f.csv", m, FeatureKind::min_max().column_names(1));
  const auto t = read_feature_csv(dir / "f.csv");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"layer1_min", "layer1_max"}));
  EXPECT_EQ(t.ids, (std::vector<std::int64_t>{0, 1}));
  EXPECT_EQ(t.values, m);
}

TEST(YeoJohnson, IdentityAtLambdaOne) {
  for (double x : {-7.5, -1.0, -1e-3, 0.0, 0.25, 3.0, 1e4}) EXPECT_NEAR(yeo_johnson(x, 1.0), x, 1e-9);
}

TEST(YeoJohnson, LogBranches) {
  for (double x : {0.0, 0.5, 2.0, 100.0}) EXPECT_NEAR(yeo_johnson(x, 0.0), std::log1p(x), 1e-9);
  for (double x : {-0.5, -2.0, -100.0}) EXPECT_NEAR(yeo_johnson(x, 2.0), -std::log1p(-x), 1e-9);
  EXPECT_NEAR(yeo_johnson(std::exp(1.0) - 1.0, 0.0), 1.0, 1e-9);
  EXPECT_NEAR(yeo_johnson(1.0 - std::exp(2.0), 2.0), -2.0, 1e-9);
}

TEST(YeoJohnson, ContinuousInLambdaAtBranchPoints) {
  for (double x : {-3.0, -0.2, 0.2, 3.0}) {
    for (double l : {0.0, 2.0}) {
      EXPECT_NEAR(yeo_johnson(x, l + 1e-6), yeo_johnson(x, l), 1e-5);
      EXPECT_NEAR(yeo_johnson(x, l - 1e-6), yeo_johnson(x, l), 1e-5);
    }
  }
}

TEST(YeoJohnson, StrictlyIncreasingAndContinuousInX) {
  Rng rng(4);
  for (int c = 0; c < 50; ++c) {
    const double l = rng.uniform(-5, 5);
    double prev = yeo_johnson(-20.0, l);
    for (int k = 1; k <= 800; ++k) {
      const double x = -20.0 + 0.05 * k;
      const double v = yeo_johnson(x, l);
      ASSERT_GT(v, prev) << "lambda " << l << " x " << x;
      prev = v;
    }
    EXPECT_NEAR(yeo_johnson(1e-12, l), yeo_johnson(-1e-12, l), 1e-9);
  }
}

TEST(YeoJohnson, LikelihoodMatchesOracle) {
  Rng rng(5);
  const auto x = gen::skewed(rng, 300, 3);
  for (double l : {-2.0, 0.0, 0.7, 2.0, 4.5})
    EXPECT_NEAR(yeo_johnson_log_likelihood(x, l), oracle::yj_log_likelihood(x, l), 1e-8 * std::abs(oracle::yj_log_likelihood(x, l)));
}

TEST(YeoJohnson, FittedLambdaNearGridOracle) {
  Rng rng(6);
  for (int c = 0; c < 20; ++c) {
    const auto x = gen::skewed(rng, 200 + 20 * c, c);
    EXPECT_NEAR(fit_yeo_johnson_lambda(x), oracle::yj_grid_lambda(x), 0.05) << "case " << c;
  }
}

TEST(PowerTransform, StandardisesItsFitData) {
  Rng rng(7);
  Matrix m(400, 5);
  for (std::size_t j = 0; j < 5; ++j) {
    const auto col = gen::skewed(rng, 400, static_cast<int>(j));
    for (std::size_t i = 0; i < 400; ++i) m(i, j) = col[i];
  }
  const auto pt = fit_power_transform(m);
  const auto z = pt.apply(m);
  for (std::size_t j = 0; j < 5; ++j) {
    const auto c = z.column(j);
    double mean = 0, var = 0;
    for (double v : c) mean += v;
    mean /= 400;
    for (double v : c) var += (v - mean) * (v - mean);
    var /= 400;
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(PowerTransform, ConstantColumnIsFlaggedNotFatal) {
  Rng rng(8);
  Matrix m = gen::gaussian_matrix(rng, 50, 3);
  for (std::size_t i = 0; i < 50; ++i) m(i, 1) = 2.5;
  const auto pt = fit_power_transform(m);
  EXPECT_TRUE(pt.flagged[1]);
  EXPECT_FALSE(pt.flagged[0]);
  EXPECT_EQ(pt.std[1], 1.0);
  const auto z = pt.apply(m);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_TRUE(std::isfinite(z(i, 1)));
}

TEST(PowerTransform, TextRoundTripIsExact) {
  Rng rng(9);
  const auto pt = fit_power_transform(gen::correlated_matrix(rng, 60, 4));
  EXPECT_EQ(PowerTransform::from_text(pt.to_text()), pt);
}

TEST(PowerTransform, RejectsNonFiniteInput) {
  Rng rng(10);
  Matrix m = gen::gaussian_matrix(rng, 30, 2);
  const auto pt = fit_power_transform(m);
  m(4, 1) = std::nan("");
  EXPECT_THROW(pt.apply(m), ContractError);
  EXPECT_THROW(fit_power_transform(Matrix(5, 2)), ContractError);
}
