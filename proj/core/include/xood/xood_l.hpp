#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xood/data.hpp"
#include "xood/distortions.hpp"
#include "xood/features.hpp"
#include "xood/io.hpp"
#include "xood/linalg.hpp"
#include "xood/power_transform.hpp"
#include "xood/xood_m.hpp"

namespace xood {

/// Splits each feature around an in-distribution mean into
/// (relu(m - m̄), relu(m̄ - m)), then standardises the 2d split columns.
struct SplitScaler {
  std::vector<double> center;      // m̄, one per raw feature
  std::vector<double> scale_mean;  // per split column
  std::vector<double> scale_std;   // per split column
  std::vector<bool> flagged;       // split columns whose std hit the guard

  std::size_t raw_dims() const { return center.size(); }
  std::size_t split_dims() const { return 2 * center.size(); }

  /// Layout (m1⁺, m1⁻, m2⁺, m2⁻, ...), before standardisation.
  void split_row(std::span<const double> m, std::span<double> out) const;
  Matrix split(const Matrix& m) const;
  void transform_row(std::span<const double> m, std::span<double> out) const;
  Matrix transform(const Matrix& m) const;

  friend bool operator==(const SplitScaler&, const SplitScaler&) = default;
};

struct SplitScaled {
  SplitScaler scaler;
  Matrix features;  // fit_features split and standardised, [n, 2d]
};

/// m̄ = column means of `means_source`; standardisation statistics come from
/// the split `fit_features`.
SplitScaled split_and_scale(const Matrix& fit_features, const Matrix& means_source);

struct LogRegOptions {
  double tolerance = 1e-8;  // gradient ∞-norm
  int max_iterations = 100;
};

struct LogRegFit {
  std::vector<double> weights;  // [intercept, w_1..w_p]
  int iterations = 0;
  double gradient_norm = 0.0;  // ∞-norm at the returned weights
  bool converged = false;
};

/// Objective: mean logistic loss + λ·‖w‖²/2, intercept unpenalised.
double logreg_objective(const Matrix& x, std::span<const double> y, std::span<const double> w,
                        double lambda);
std::vector<double> logreg_gradient(const Matrix& x, std::span<const double> y,
                                    std::span<const double> w, double lambda);
/// Mean logistic loss without the penalty.
double mean_log_loss(const Matrix& x, std::span<const double> y, std::span<const double> w);

/// Newton's method with step halving. Labels are 0/1; both must occur.
LogRegFit fit_logreg(const Matrix& x, std::span<const double> y, double lambda,
                     const LogRegOptions& options = {});

double sigmoid(double z);

/// Rows from the calibration set and its distorted copies.
struct LabeledFeatureSet {
  Matrix features;
  std::vector<double> labels;          // 1 = classifier correct
  std::vector<std::uint32_t> fold_id;  // 0 calibration, i + 1 for distortion i
  std::vector<std::string> fold_names;
};

/// Calibration plus one distorted copy per entry of `distortions`, run
/// through the network and the training power transform, labelled by
/// classifier correctness. Distortion kind k draws from
/// derive_seed(seed, "distort.<k>").
LabeledFeatureSet build_training_set(const Network& net, const Dataset& calibration,
                                     const PowerTransform& transform, FeatureKind kind,
                                     std::uint64_t seed,
                                     std::span<const DistortionKind> distortions = kAllDistortions,
                                     std::size_t batch_size = 256);

std::vector<double> default_lambda_grid();

struct CvResult {
  double best_lambda = 0.0;
  std::vector<double> grid;
  Matrix fold_loss;  // [grid, folds] held-out mean log loss
  std::vector<double> mean_loss;
  std::size_t rounds_per_lambda = 0;
};

/// Leave-one-source-out cross-validation. The lowest mean held-out loss wins;
/// ties go to the larger λ.
CvResult cross_validate(const Matrix& features, std::span<const double> labels,
                        std::span<const std::uint32_t> fold_id, std::span<const double> grid,
                        const LogRegOptions& options = {});

struct LDetector {
  SplitScaler scaler;
  std::vector<double> weights;  // [intercept, w over split columns]
  double lambda = 0.0;
  std::optional<double> threshold;

  /// w·[1, split-scaled features]; input is the power-transformed feature row.
  double linear(std::span<const double> x) const;
  double score(std::span<const double> x) const { return sigmoid(linear(x)); }
  /// In-distribution iff score > threshold. Throws ConfigError without a threshold.
  Decision decide(std::span<const double> x) const;
};

double score_l(const LDetector& det, std::span<const double> x);

void write_l_detector(Bundle& bundle, const LDetector& det);
LDetector read_l_detector(const Bundle& bundle);

}  // namespace xood
