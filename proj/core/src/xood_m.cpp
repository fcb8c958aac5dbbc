#include "xood/xood_m.hpp"

#include <algorithm>
#include <cmath>

#include "xood/error.hpp"

namespace xood {

MDetector fit_m(const Matrix& features, double regularization) {
  if (!(regularization >= 0.0) || !std::isfinite(regularization)) {
    throw ConfigError("regularization C must be a finite value >= 0");
  }
  if (features.rows() <= features.cols()) {
    throw ContractError("fit_m: need more rows (" + std::to_string(features.rows()) +
                        ") than feature dimensions (" + std::to_string(features.cols()) + ")");
  }
  MDetector det;
  det.mean = column_means(features);
  det.covariance = covariance(features, det.mean);
  det.regularization = regularization;
  Matrix regularized = det.covariance;
  for (std::size_t i = 0; i < regularized.rows(); ++i) regularized(i, i) += regularization;
  det.factor = cholesky(regularized);
  return det;
}

double MDetector::distance(std::span<const double> x) const {
  if (x.size() != dims()) {
    throw DimensionError("XOOD-M expects " + std::to_string(dims()) + " features, got " +
                         std::to_string(x.size()));
  }
  std::vector<double> centered(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw ContractError("XOOD-M: non-finite feature at index " + std::to_string(i));
    }
    centered[i] = x[i] - mean[i];
  }
  solve_lower(factor, centered);
  return std::sqrt(dot(centered, centered));
}

Decision MDetector::decide(std::span<const double> x) const {
  if (!threshold) throw ConfigError("XOOD-M detector has no calibrated threshold");
  return confidence(x) > *threshold ? Decision::InDistribution : Decision::OutOfDistribution;
}

double score_m(const MDetector& det, std::span<const double> x) { return det.distance(x); }

double calibrate_threshold(std::span<const double> id_confidences, double tpr) {
  if (id_confidences.empty()) throw ContractError("calibrate_threshold: no calibration scores");
  std::vector<double> sorted(id_confidences.begin(), id_confidences.end());
  std::sort(sorted.begin(), sorted.end());
  const double reject = (1.0 - tpr) * static_cast<double>(sorted.size());
  // 1e-9 absorbs representation error in (1 - tpr) * n, e.g. 0.05 * 20.
  auto rank = static_cast<std::size_t>(std::ceil(reject - 1e-9));
  if (rank == 0) rank = 1;
  return sorted[rank - 1];
}

namespace {

Tensor vector_tensor(const std::vector<double>& v) {
  return Tensor({static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

void write_m_detector(Bundle& b, const MDetector& det) {
  b.manifest.set("d", static_cast<std::uint64_t>(det.dims()));
  b.manifest.set("C", det.regularization);
  b.manifest.set("threshold", det.threshold ? format_double(*det.threshold) : std::string("none"));
  b.add("mean", vector_tensor(det.mean));
  b.add("covariance", det.covariance.to_tensor());
  b.add("factor", det.factor.to_tensor());
}

MDetector read_m_detector(const Bundle& b) {
  MDetector det;
  const auto d = b.manifest.get_uint("d");
  det.regularization = b.manifest.get_double("C");
  const auto& th = b.manifest.get("threshold");
  if (th != "none") det.threshold = b.manifest.get_double("threshold");
  const auto& mean = b.blob("mean");
  det.mean.assign(mean.storage().begin(), mean.storage().end());
  det.covariance = Matrix::from_tensor(b.blob("covariance"));
  det.factor = Matrix::from_tensor(b.blob("factor"));
  if (det.mean.size() != d || det.covariance.rows() != d || det.factor.rows() != d) {
    throw FormatError("XOOD-M detector blobs do not match d=" + std::to_string(d), 0);
  }
  return det;
}

}  // namespace xood
