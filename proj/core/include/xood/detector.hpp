#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "xood/data.hpp"
#include "xood/features.hpp"
#include "xood/model.hpp"
#include "xood/power_transform.hpp"
#include "xood/xood_l.hpp"
#include "xood/xood_m.hpp"

namespace xood {

enum class Method { XoodM, XoodL };

/// "xood-m" / "xood-l"; parse also accepts "m" and "l".
std::string to_string(Method m);
Method parse_method(std::string_view name);

struct FitOptions {
  FeatureKind kind = FeatureKind::min_max();
  double regularization = kDefaultRegularization;  // XOOD-M C
  std::vector<double> lambda_grid = default_lambda_grid();  // XOOD-L
  std::uint64_t seed = 0;  // XOOD-L distortions
  std::vector<DistortionKind> distortions{kAllDistortions.begin(), kAllDistortions.end()};
  std::size_t batch_size = 256;
};

struct FitReport {
  std::size_t train_images = 0;
  std::size_t correct_images = 0;
  std::size_t calibration_images = 0;
  std::optional<CvResult> cv;
};

/// A fitted detector together with the feature pipeline that feeds it.
struct Detector {
  Method method = Method::XoodM;
  FeatureKind kind;
  std::size_t layers = 0;  // activation layers of the network it was fitted on
  PowerTransform transform;
  std::optional<MDetector> m;
  std::optional<LDetector> l;

  /// Confidence per row of raw (untransformed) features: -D_M for XOOD-M,
  /// the logistic probability for XOOD-L.
  std::vector<double> confidence(const Matrix& raw_features) const;
  std::vector<double> confidence(const Network& net, const Tensor& images,
                                 std::size_t batch_size = 256) const;
  std::optional<double> threshold() const;
  /// In-distribution iff confidence > threshold.
  Decision decide(double confidence) const;
};

/// Fits on the training images the network classifies correctly and
/// calibrates the 95%-TPR threshold on `calibration`.
Detector fit_xood_m(const Network& net, const Dataset& train, const Dataset& calibration,
                    const FitOptions& options, FitReport* report = nullptr);

/// Power transform and split means from correctly classified training
/// images; logistic regression on calibration plus its distorted copies.
Detector fit_xood_l(const Network& net, const Dataset& train, const Dataset& calibration,
                    const FitOptions& options, FitReport* report = nullptr);

Detector fit_detector(Method method, const Network& net, const Dataset& train,
                      const Dataset& calibration, const FitOptions& options,
                      FitReport* report = nullptr);

inline constexpr std::string_view kDetectorMagic = "XDET";

Bundle detector_to_bundle(const Detector& det);
Detector detector_from_bundle(const Bundle& bundle);
void save_detector(const Detector& det, const std::filesystem::path& path);
Detector load_detector(const std::filesystem::path& path);

}  // namespace xood
