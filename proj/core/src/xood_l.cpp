#include "xood/xood_l.hpp"

#include <algorithm>
#include <cmath>

#include "xood/distortions.hpp"
#include "xood/error.hpp"

namespace xood {

void SplitScaler::split_row(std::span<const double> m, std::span<double> out) const {
  if (m.size() != raw_dims()) {
    throw DimensionError("split features: expected " + std::to_string(raw_dims()) + " values, got " +
                         std::to_string(m.size()));
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double delta = m[i] - center[i];
    out[2 * i] = delta > 0.0 ? delta : 0.0;
    out[2 * i + 1] = delta < 0.0 ? -delta : 0.0;
  }
}

Matrix SplitScaler::split(const Matrix& m) const {
  Matrix out(m.rows(), split_dims());
  for (std::size_t r = 0; r < m.rows(); ++r) split_row(m.row(r), out.row(r));
  return out;
}

void SplitScaler::transform_row(std::span<const double> m, std::span<double> out) const {
  split_row(m, out);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (out[j] - scale_mean[j]) / scale_std[j];
}

Matrix SplitScaler::transform(const Matrix& m) const {
  Matrix out(m.rows(), split_dims());
  for (std::size_t r = 0; r < m.rows(); ++r) transform_row(m.row(r), out.row(r));
  return out;
}

SplitScaled split_and_scale(const Matrix& fit_features, const Matrix& means_source) {
  if (means_source.rows() == 0) throw ContractError("split_and_scale: empty means source");
  if (fit_features.rows() == 0) throw ContractError("split_and_scale: empty feature matrix");
  if (means_source.cols() != fit_features.cols()) throw DimensionError("split_and_scale: width mismatch");
  SplitScaled out;
  auto& s = out.scaler;
  s.center = column_means(means_source);
  Matrix split = s.split(fit_features);
  const std::size_t n = split.rows(), p = split.cols();
  s.scale_mean = column_means(split);
  s.scale_std.assign(p, 1.0);
  s.flagged.assign(p, false);
  for (std::size_t j = 0; j < p; ++j) {
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = split(r, j) - s.scale_mean[j];
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd >= kStdGuard) {
      s.scale_std[j] = sd;
    } else {
      s.flagged[j] = true;
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) split(r, j) = (split(r, j) - s.scale_mean[j]) / s.scale_std[j];
  }
  out.features = std::move(split);
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// log(1 + e^z)
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double linear_score(std::span<const double> row, std::span<const double> w) {
  double z = w[0];
  for (std::size_t j = 0; j < row.size(); ++j) z += w[j + 1] * row[j];
  return z;
}

void check_problem(const Matrix& x, std::span<const double> y, std::span<const double> w) {
  if (y.size() != x.rows()) throw DimensionError("logistic regression: label count mismatch");
  if (w.size() != x.cols() + 1) throw DimensionError("logistic regression: weight count mismatch");
  if (x.rows() == 0) throw ContractError("logistic regression: no rows");
}

}  // namespace

double mean_log_loss(const Matrix& x, std::span<const double> y, std::span<const double> w) {
  check_problem(x, y, w);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double z = linear_score(x.row(i), w);
    total += softplus(z) - y[i] * z;
  }
  return total / static_cast<double>(x.rows());
}

double logreg_objective(const Matrix& x, std::span<const double> y, std::span<const double> w,
                        double lambda) {
  double penalty = 0.0;
  for (std::size_t j = 1; j < w.size(); ++j) penalty += w[j] * w[j];
  return mean_log_loss(x, y, w) + 0.5 * lambda * penalty;
}

std::vector<double> logreg_gradient(const Matrix& x, std::span<const double> y,
                                    std::span<const double> w, double lambda) {
  check_problem(x, y, w);
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    const double r = sigmoid(linear_score(row, w)) - y[i];
    g[0] += r;
    for (std::size_t j = 0; j < row.size(); ++j) g[j + 1] += r * row[j];
  }
  const auto n = static_cast<double>(x.rows());
  for (auto& v : g) v /= n;
  for (std::size_t j = 1; j < w.size(); ++j) g[j] += lambda * w[j];
  return g;
}

LogRegFit fit_logreg(const Matrix& x, std::span<const double> y, double lambda,
                     const LogRegOptions& options) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("λ_reg must be finite and >= 0");
  bool has0 = false, has1 = false;
  for (double v : y) {
    if (v == 0.0) has0 = true;
    else if (v == 1.0) has1 = true;
    else throw ContractError("logistic regression labels must be 0 or 1");
  }
  if (!has0 || !has1) throw ContractError("logistic regression needs at least one row of each label");

  const std::size_t p = x.cols() + 1;
  const auto n = static_cast<double>(x.rows());
  LogRegFit fit;
  fit.weights.assign(p, 0.0);
  auto& w = fit.weights;
  double obj = logreg_objective(x, y, w, lambda);
  std::vector<double> row1(p);
  for (fit.iterations = 0;; ++fit.iterations) {
    const auto g = logreg_gradient(x, y, w, lambda);
    fit.gradient_norm = 0.0;
    for (double v : g) fit.gradient_norm = std::max(fit.gradient_norm, std::abs(v));
    if (!std::isfinite(fit.gradient_norm)) throw NumericalError("logistic regression diverged");
    if (fit.gradient_norm < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= options.max_iterations) break;

    Matrix h(p, p);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      row1[0] = 1.0;
      const auto row = x.row(i);
      std::copy(row.begin(), row.end(), row1.begin() + 1);
      const double pr = sigmoid(linear_score(row, w));
      const double s = pr * (1.0 - pr) / n;
      for (std::size_t a = 0; a < p; ++a) {
        const double sa = s * row1[a];
        for (std::size_t b = 0; b <= a; ++b) h(a, b) += sa * row1[b];
      }
    }
    for (std::size_t a = 0; a < p; ++a) {
      if (a > 0) h(a, a) += lambda;
      for (std::size_t b = 0; b < a; ++b) h(b, a) = h(a, b);
    }
    std::vector<double> step;
    // A saturated fit can leave the Hessian numerically singular; a small
    // ridge keeps the Newton step defined.
    for (double ridge = 0.0;; ridge = ridge == 0.0 ? 1e-12 : ridge * 100.0) {
      try {
        Matrix hr = h;
        for (std::size_t a = 0; a < p; ++a) hr(a, a) += ridge;
        step = cholesky_solve(cholesky(hr), g);
        break;
      } catch (const SingularMatrixError&) {
        if (ridge > 1.0) throw NumericalError("logistic regression Hessian is singular");
      }
    }
    double t = 1.0;
    std::vector<double> trial(p);
    bool improved = false;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      for (std::size_t j = 0; j < p; ++j) trial[j] = w[j] - t * step[j];
      const double tobj = logreg_objective(x, y, trial, lambda);
      if (tobj <= obj) {
        improved = tobj < obj || t == 1.0;
        w = trial;
        obj = tobj;
        break;
      }
    }
    if (!improved) {
      // objective flat to rounding: take the Newton step if it shrinks the gradient
      for (std::size_t j = 0; j < p; ++j) trial[j] = w[j] - step[j];
      double trial_norm = 0.0;
      for (double v : logreg_gradient(x, y, trial, lambda)) trial_norm = std::max(trial_norm, std::abs(v));
      if (!(trial_norm < fit.gradient_norm)) break;
      w = trial;
      obj = logreg_objective(x, y, w, lambda);
    }
  }
  return fit;
}

LabeledFeatureSet build_training_set(const Network& net, const Dataset& calibration,
                                     const PowerTransform& transform, FeatureKind kind,
                                     std::uint64_t seed, std::span<const DistortionKind> distortions,
                                     std::size_t batch_size) {
  if (!calibration.has_labels()) throw ContractError("build_training_set: calibration data needs labels");
  const std::size_t n = calibration.size();
  const std::size_t folds = distortions.size() + 1;
  LabeledFeatureSet set;
  set.features = Matrix(folds * n, transform.dims());
  set.labels.reserve(folds * n);
  set.fold_id.reserve(folds * n);
  set.fold_names.push_back("calibration");
  for (std::uint32_t fold = 0; fold < folds; ++fold) {
    Dataset part;
    if (fold == 0) {
      part = calibration;
    } else {
      const auto dk = distortions[fold - 1];
      set.fold_names.push_back(to_string(dk));
      part = distort(calibration, dk, derive_seed(seed, "distort." + to_string(dk)));
    }
    const auto pass = compute_features(net, part.images, kind, batch_size);
    const auto z = transform.apply(pass.features);
    std::copy(z.storage().begin(), z.storage().end(),
              set.features.storage().begin() + static_cast<std::ptrdiff_t>(fold * n * z.cols()));
    const auto& labels = part.require_labels();
    for (std::size_t i = 0; i < n; ++i) {
      set.labels.push_back(pass.predictions[i] == labels[i] ? 1.0 : 0.0);
      set.fold_id.push_back(fold);
    }
  }
  return set;
}

std::vector<double> default_lambda_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0}; }

CvResult cross_validate(const Matrix& features, std::span<const double> labels,
                        std::span<const std::uint32_t> fold_id, std::span<const double> grid,
                        const LogRegOptions& options) {
  if (grid.empty()) throw ConfigError("cross_validate: empty λ grid");
  if (labels.size() != features.rows() || fold_id.size() != features.rows()) {
    throw DimensionError("cross_validate: labels/fold ids must match the feature rows");
  }
  std::uint32_t folds = 0;
  for (auto f : fold_id) folds = std::max(folds, f + 1);
  std::vector<std::vector<std::size_t>> members(folds);
  for (std::size_t i = 0; i < fold_id.size(); ++i) members[fold_id[i]].push_back(i);
  for (std::uint32_t f = 0; f < folds; ++f) {
    if (members[f].empty()) throw ContractError("cross_validate: fold " + std::to_string(f) + " has no rows");
  }

  CvResult out;
  out.grid.assign(grid.begin(), grid.end());
  out.fold_loss = Matrix(grid.size(), folds);
  out.mean_loss.assign(grid.size(), 0.0);
  out.rounds_per_lambda = folds;

  for (std::uint32_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows;
    for (std::uint32_t o = 0; o < folds; ++o) {
      if (o != f) train_rows.insert(train_rows.end(), members[o].begin(), members[o].end());
    }
    const Matrix xtr = select_rows(features, train_rows);
    const Matrix xte = select_rows(features, members[f]);
    std::vector<double> ytr, yte;
    for (auto i : train_rows) ytr.push_back(labels[i]);
    for (auto i : members[f]) yte.push_back(labels[i]);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto fit = fit_logreg(xtr, ytr, grid[g], options);
      out.fold_loss(g, f) = mean_log_loss(xte, yte, fit.weights);
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (std::uint32_t f = 0; f < folds; ++f) s += out.fold_loss(g, f);
    out.mean_loss[g] = s / folds;
    const bool better = out.mean_loss[g] < out.mean_loss[best] ||
                        (out.mean_loss[g] == out.mean_loss[best] && grid[g] > grid[best]);
    if (g == 0 || better) best = g;
  }
  out.best_lambda = grid[best];
  return out;
}

double LDetector::linear(std::span<const double> x) const {
  if (weights.size() != scaler.split_dims() + 1) throw ContractError("XOOD-L detector is not fitted");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw ContractError("XOOD-L: non-finite feature at index " + std::to_string(i));
  }
  if (x.size() != scaler.raw_dims()) {
    throw DimensionError("XOOD-L: expected " + std::to_string(scaler.raw_dims()) + " features, got " +
                         std::to_string(x.size()));
  }
  double z = weights[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - scaler.center[i];
    const double plus = delta > 0.0 ? delta : 0.0;
    const double minus = delta < 0.0 ? -delta : 0.0;
    z += weights[2 * i + 1] * ((plus - scaler.scale_mean[2 * i]) / scaler.scale_std[2 * i]);
    z += weights[2 * i + 2] * ((minus - scaler.scale_mean[2 * i + 1]) / scaler.scale_std[2 * i + 1]);
  }
  return z;
}

Decision LDetector::decide(std::span<const double> x) const {
  if (!threshold) throw ConfigError("XOOD-L detector has no calibrated threshold");
  return score(x) > *threshold ? Decision::InDistribution : Decision::OutOfDistribution;
}

double score_l(const LDetector& det, std::span<const double> x) { return det.score(x); }

namespace {

Tensor vector_tensor(std::span<const double> v) {
  return Tensor({static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.begin(), v.end()));
}

std::vector<double> tensor_vector(const Tensor& t) { return {t.storage().begin(), t.storage().end()}; }

}  // namespace

void write_l_detector(Bundle& b, const LDetector& det) {
  b.manifest.set("d", static_cast<std::uint64_t>(det.scaler.raw_dims()));
  b.manifest.set("lambda_reg", det.lambda);
  b.manifest.set("threshold", det.threshold ? format_double(*det.threshold) : std::string("none"));
  b.manifest.set("intercept", det.weights.at(0));
  std::string flagged;
  for (std::size_t j = 0; j < det.scaler.flagged.size(); ++j) {
    if (det.scaler.flagged[j]) flagged += (flagged.empty() ? "" : ",") + std::to_string(j);
  }
  b.manifest.set("flagged_split_columns", flagged);
  b.add("means", vector_tensor(det.scaler.center));
  Matrix scales(2, det.scaler.split_dims());
  for (std::size_t j = 0; j < det.scaler.split_dims(); ++j) {
    scales(0, j) = det.scaler.scale_mean[j];
    scales(1, j) = det.scaler.scale_std[j];
  }
  b.add("scales", scales.to_tensor());
  b.add("weights", vector_tensor(std::span<const double>(det.weights).subspan(1)));
}

LDetector read_l_detector(const Bundle& b) {
  LDetector det;
  const auto d = b.manifest.get_uint("d");
  det.lambda = b.manifest.get_double("lambda_reg");
  if (b.manifest.get("threshold") != "none") det.threshold = b.manifest.get_double("threshold");
  det.scaler.center = tensor_vector(b.blob("means"));
  const auto scales = Matrix::from_tensor(b.blob("scales"));
  const auto w = tensor_vector(b.blob("weights"));
  if (det.scaler.center.size() != d || scales.rows() != 2 || scales.cols() != 2 * d || w.size() != 2 * d) {
    throw FormatError("XOOD-L detector blobs do not match d=" + std::to_string(d), 0);
  }
  det.scaler.scale_mean.assign(scales.row(0).begin(), scales.row(0).end());
  det.scaler.scale_std.assign(scales.row(1).begin(), scales.row(1).end());
  det.scaler.flagged.assign(2 * d, false);
  for (auto f : split(b.manifest.get("flagged_split_columns"), ',')) {
    if (f.empty()) continue;
    const auto j = parse_int(f);
    if (!j || *j < 0 || static_cast<std::uint64_t>(*j) >= 2 * d) throw FormatError("bad flagged column list", 0);
    det.scaler.flagged[static_cast<std::size_t>(*j)] = true;
  }
  det.weights.push_back(b.manifest.get_double("intercept"));
  det.weights.insert(det.weights.end(), w.begin(), w.end());
  return det;
}

}  // namespace xood
