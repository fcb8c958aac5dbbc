#include "xood/detector.hpp"

#include "xood/error.hpp"

namespace xood {

std::string to_string(Method m) { return m == Method::XoodM ? "xood-m" : "xood-l"; }

Method parse_method(std::string_view name) {
  if (name == "xood-m" || name == "m") return Method::XoodM;
  if (name == "xood-l" || name == "l") return Method::XoodL;
  throw ConfigError("unknown method '" + std::string(name) + "' (m|l)");
}

std::vector<double> Detector::confidence(const Matrix& raw_features) const {
  const Matrix z = transform.apply(raw_features);
  std::vector<double> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    out[i] = method == Method::XoodM ? m->confidence(z.row(i)) : l->score(z.row(i));
  }
  return out;
}

std::vector<double> Detector::confidence(const Network& net, const Tensor& images,
                                         std::size_t batch_size) const {
  if (net.activation_count() != layers) {
    throw DimensionError("detector was fitted on a network with " + std::to_string(layers) +
                         " activation layers, this one has " + std::to_string(net.activation_count()));
  }
  return confidence(compute_features(net, images, kind, batch_size).features);
}

std::optional<double> Detector::threshold() const {
  return method == Method::XoodM ? m->threshold : l->threshold;
}

Decision Detector::decide(double confidence) const {
  const auto t = threshold();
  if (!t) throw ConfigError("detector has no calibrated threshold");
  return confidence > *t ? Decision::InDistribution : Decision::OutOfDistribution;
}

namespace {

struct TrainingFeatures {
  PowerTransform transform;
  Matrix transformed;  // correct training rows after the power transform
};

TrainingFeatures correct_training_features(const Network& net, const Dataset& train,
                                           const FitOptions& options, FitReport* report) {
  const auto& labels = train.require_labels();
  const auto pass = compute_features(net, train.images, options.kind, options.batch_size);
  const auto correct = correct_indices(pass.predictions, labels);
  if (report) {
    report->train_images = train.size();
    report->correct_images = correct.size();
  }
  const Matrix raw = select_rows(pass.features, correct);
  TrainingFeatures out;
  out.transform = fit_power_transform(raw);
  out.transformed = out.transform.apply(raw);
  return out;
}

// Blobs persist as f32; rounding before calibration makes a reloaded
// detector score exactly like the in-memory one.
void round_to_f32(std::vector<double>& v) {
  for (auto& x : v) x = static_cast<float>(x);
}

Detector base_detector(Method method, const Network& net, const FitOptions& options) {
  Detector det;
  det.method = method;
  det.kind = options.kind;
  det.layers = net.activation_count();
  return det;
}

}  // namespace

Detector fit_xood_m(const Network& net, const Dataset& train, const Dataset& calibration,
                    const FitOptions& options, FitReport* report) {
  auto det = base_detector(Method::XoodM, net, options);
  auto tf = correct_training_features(net, train, options, report);
  det.transform = std::move(tf.transform);
  det.m = fit_m(tf.transformed, options.regularization);
  round_to_f32(det.m->mean);
  round_to_f32(det.m->covariance.storage());
  round_to_f32(det.m->factor.storage());
  const auto conf = det.confidence(net, calibration.images, options.batch_size);
  det.m->threshold = calibrate_threshold(conf);
  if (report) report->calibration_images = calibration.size();
  return det;
}

Detector fit_xood_l(const Network& net, const Dataset& train, const Dataset& calibration,
                    const FitOptions& options, FitReport* report) {
  auto det = base_detector(Method::XoodL, net, options);
  auto tf = correct_training_features(net, train, options, report);
  det.transform = std::move(tf.transform);

  const auto set = build_training_set(net, calibration, det.transform, options.kind, options.seed,
                                      options.distortions, options.batch_size);
  auto scaled = split_and_scale(set.features, tf.transformed);
  auto cv = cross_validate(scaled.features, set.labels, set.fold_id, options.lambda_grid);
  const auto fit = fit_logreg(scaled.features, set.labels, cv.best_lambda);

  LDetector l;
  l.scaler = std::move(scaled.scaler);
  l.weights = fit.weights;
  l.lambda = cv.best_lambda;
  round_to_f32(l.scaler.center);
  round_to_f32(l.scaler.scale_mean);
  round_to_f32(l.scaler.scale_std);
  const double intercept = l.weights[0];
  round_to_f32(l.weights);
  l.weights[0] = intercept;
  std::vector<double> calib_scores;
  for (std::size_t i = 0; i < set.fold_id.size(); ++i) {
    if (set.fold_id[i] == 0) calib_scores.push_back(l.score(set.features.row(i)));
  }
  l.threshold = calibrate_threshold(calib_scores);
  det.l = std::move(l);
  if (report) {
    report->calibration_images = calibration.size();
    report->cv = std::move(cv);
  }
  return det;
}

Detector fit_detector(Method method, const Network& net, const Dataset& train,
                      const Dataset& calibration, const FitOptions& options, FitReport* report) {
  return method == Method::XoodM ? fit_xood_m(net, train, calibration, options, report)
                                 : fit_xood_l(net, train, calibration, options, report);
}

Bundle detector_to_bundle(const Detector& det) {
  Bundle b;
  b.magic = std::string(kDetectorMagic);
  b.manifest.set("format", std::string("xood-detector"));
  b.manifest.set("method", to_string(det.method));
  b.manifest.set("feature_kind", det.kind.name());
  b.manifest.set("layers", static_cast<std::uint64_t>(det.layers));
  b.manifest.set("pt.dims", static_cast<std::uint64_t>(det.transform.dims()));
  const auto pt_text = det.transform.to_text();
  std::size_t i = 0;
  for (auto line : split(pt_text, '\n')) {
    if (!line.empty()) b.manifest.set("pt." + std::to_string(i++), std::string(line));
  }
  if (det.method == Method::XoodM) {
    write_m_detector(b, *det.m);
  } else {
    write_l_detector(b, *det.l);
  }
  return b;
}

Detector detector_from_bundle(const Bundle& b) {
  if (b.manifest.get("format") != "xood-detector") throw FormatError("not a detector bundle", 0);
  Detector det;
  det.method = parse_method(b.manifest.get("method"));
  det.kind = FeatureKind::parse(b.manifest.get("feature_kind"));
  det.layers = b.manifest.get_uint("layers");
  const auto dims = b.manifest.get_uint("pt.dims");
  std::string pt_text;
  for (std::uint64_t i = 0; i < dims; ++i) pt_text += b.manifest.get("pt." + std::to_string(i)) + "\n";
  det.transform = PowerTransform::from_text(pt_text);
  if (det.transform.dims() != det.kind.width(det.layers)) {
    throw FormatError("power transform width does not match feature kind and layer count", 0);
  }
  if (det.method == Method::XoodM) {
    det.m = read_m_detector(b);
    if (det.m->dims() != dims) throw FormatError("XOOD-M width does not match the power transform", 0);
  } else {
    det.l = read_l_detector(b);
    if (det.l->scaler.raw_dims() != dims) throw FormatError("XOOD-L width does not match the power transform", 0);
  }
  return det;
}

void save_detector(const Detector& det, const std::filesystem::path& path) {
  write_bundle(path, detector_to_bundle(det));
}

Detector load_detector(const std::filesystem::path& path) {
  return detector_from_bundle(read_bundle(path, kDetectorMagic));
}

}  // namespace xood
