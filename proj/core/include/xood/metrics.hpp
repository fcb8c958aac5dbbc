#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xood/tensor.hpp"

namespace xood {

/// Confidence scores (higher = more in-distribution) with their ground truth.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<bool> is_id;

  static ScoredSet from(std::span<const double> id_scores, std::span<const double> ood_scores);
  std::size_t id_count() const;
  std::size_t ood_count() const;
};

/// Rank statistic with midranks for ties: P(id > ood) + ½·P(id = ood).
double auroc(const ScoredSet& s);

/// T is the largest value with #{id >= T} / n_id >= tpr. Returns the fraction
/// of OOD scores strictly below T. Needs at least 20 ID scores.
double tnr_at_tpr(const ScoredSet& s, double tpr = 0.95);
inline double tnr_at_95tpr(const ScoredSet& s) { return tnr_at_tpr(s, 0.95); }
inline double fpr_at_95tpr(const ScoredSet& s) { return 1.0 - tnr_at_95tpr(s); }
/// The threshold T used by tnr_at_tpr.
double tpr_threshold(std::span<const double> id_scores, double tpr = 0.95);

/// max over T of (P(f > T | ID) + P(f <= T | OOD)) / 2, T ranging over -∞ and
/// every distinct score.
double detection_accuracy(const ScoredSet& s);

/// Largest class probability per row. Rows must sum to 1 ± 1e-4.
std::vector<double> msp_baseline(const Tensor& probabilities);

/// (T - T_B) / T_B.
double overhead(double t_method, double t_baseline);

struct Histogram {
  std::vector<double> edges;  // bins + 1, ascending
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max] of the values; the last bin is closed.
Histogram histogram(std::span<const double> values, std::size_t bins);
/// Equal-width bins over [lo, hi]; values outside are clamped into the end bins.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

/// Lower order statistic: the ⌈q·n⌉-th smallest value (at least the first).
double lower_quantile(std::span<const double> values, double q);

struct Timing {
  std::vector<double> samples;  // seconds
  double mean = 0.0;
  double ci99 = 0.0;  // half-width of the 99% normal-approximation interval
};

/// Runs `warmup` untimed calls, then `repetitions` timed calls.
Timing time_repeated(const std::function<void()>& fn, std::size_t repetitions = 10,
                     std::size_t warmup = 1);

/// Round-robin over `fns`, one timed call each per repetition, so slow drift
/// in machine load hits every function alike.
std::vector<Timing> time_interleaved(std::span<const std::function<void()>> fns,
                                     std::size_t repetitions = 10, std::size_t warmup = 1);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares line through (x, y).
LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct MetricsRow {
  std::string in_dist;
  std::string out_dist;
  std::string method;
  double auroc = 0.0;
  double tnr95 = 0.0;
  double det_acc = 0.0;
  double fpr95 = 0.0;
};

MetricsRow evaluate(const ScoredSet& s, std::string in_dist, std::string out_dist,
                    std::string method);

/// One "<in_dist>,average,<method>,..." row per method, averaging each
/// metric across that method's OOD sets.
std::vector<MetricsRow> average_rows(std::span<const MetricsRow> rows);

/// Header "in_dist,out_dist,method,auroc,tnr95,det_acc,fpr95".
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace xood
