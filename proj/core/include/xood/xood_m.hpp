#pragma once

#include <optional>
#include <span>
#include <vector>

#include "xood/io.hpp"
#include "xood/linalg.hpp"

namespace xood {

enum class Decision { InDistribution, OutOfDistribution };

inline constexpr double kDefaultRegularization = 10.0;

/// Regularised Mahalanobis model over transformed extreme-value features.
struct MDetector {
  std::vector<double> mean;
  Matrix covariance;      // unbiased sample covariance M
  double regularization;  // C >= 0
  Matrix factor;          // lower Cholesky factor of M + C·I
  std::optional<double> threshold;

  std::size_t dims() const { return mean.size(); }

  /// D_M(x) = sqrt((x - μ)ᵀ (M + C·I)⁻¹ (x - μ)), via one triangular solve.
  double distance(std::span<const double> x) const;
  /// Confidence used by metrics and thresholds: -D_M(x).
  double confidence(std::span<const double> x) const { return -distance(x); }
  /// In-distribution iff confidence > threshold. Throws ConfigError without a threshold.
  Decision decide(std::span<const double> x) const;
};

/// Features must be power-transformed; needs more rows than columns.
/// Throws SingularMatrixError (only possible at C = 0) when M + C·I is not
/// positive definite.
MDetector fit_m(const Matrix& features, double regularization = kDefaultRegularization);

double score_m(const MDetector& det, std::span<const double> x);

/// Threshold at the 95%-TPR operating point: the ⌈0.05·n⌉-th smallest
/// confidence (lower order statistic), so that `confidence > threshold`
/// keeps 95% of the calibration data.
double calibrate_threshold(std::span<const double> id_confidences, double tpr = 0.95);

void write_m_detector(Bundle& bundle, const MDetector& det);
MDetector read_m_detector(const Bundle& bundle);

}  // namespace xood
