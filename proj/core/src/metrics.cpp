#include "xood/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "xood/error.hpp"
#include "xood/io.hpp"

namespace xood {

ScoredSet ScoredSet::from(std::span<const double> id_scores, std::span<const double> ood_scores) {
  ScoredSet s;
  s.scores.assign(id_scores.begin(), id_scores.end());
  s.scores.insert(s.scores.end(), ood_scores.begin(), ood_scores.end());
  s.is_id.assign(id_scores.size(), true);
  s.is_id.resize(s.scores.size(), false);
  return s;
}

std::size_t ScoredSet::id_count() const {
  return static_cast<std::size_t>(std::count(is_id.begin(), is_id.end(), true));
}

std::size_t ScoredSet::ood_count() const { return is_id.size() - id_count(); }

namespace {

void check_set(const ScoredSet& s, const char* what) {
  if (s.scores.size() != s.is_id.size()) throw DimensionError(std::string(what) + ": score/label length mismatch");
  if (s.id_count() == 0 || s.ood_count() == 0) {
    throw ContractError(std::string(what) + ": needs at least one ID and one OOD score");
  }
  for (double v : s.scores) {
    if (std::isnan(v)) throw ContractError(std::string(what) + ": NaN score");
  }
}

std::vector<std::size_t> ascending_order(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace

double auroc(const ScoredSet& s) {
  check_set(s, "auroc");
  const auto order = ascending_order(s.scores);
  double id_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) ++j;
    // Ranks i+1..j share the midrank.
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (s.is_id[order[k]]) id_rank_sum += midrank;
    }
    i = j;
  }
  const auto n_id = static_cast<double>(s.id_count());
  const auto n_ood = static_cast<double>(s.ood_count());
  const double u = id_rank_sum - n_id * (n_id + 1.0) / 2.0;
  return u / (n_id * n_ood);
}

double tpr_threshold(std::span<const double> id_scores, double tpr) {
  if (id_scores.size() < 20) {
    throw ContractError("TNR at " + format_double(tpr * 100) + "% TPR needs at least 20 ID scores, got " +
                        std::to_string(id_scores.size()));
  }
  std::vector<double> desc(id_scores.begin(), id_scores.end());
  std::sort(desc.begin(), desc.end(), std::greater<>());
  auto needed = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(desc.size()) - 1e-9));
  needed = std::clamp<std::size_t>(needed, 1, desc.size());
  return desc[needed - 1];
}

double tnr_at_tpr(const ScoredSet& s, double tpr) {
  check_set(s, "tnr_at_tpr");
  std::vector<double> id, ood;
  for (std::size_t i = 0; i < s.scores.size(); ++i) (s.is_id[i] ? id : ood).push_back(s.scores[i]);
  const double t = tpr_threshold(id, tpr);
  const auto below = std::count_if(ood.begin(), ood.end(), [&](double v) { return v < t; });
  return static_cast<double>(below) / static_cast<double>(ood.size());
}

double detection_accuracy(const ScoredSet& s) {
  check_set(s, "detection_accuracy");
  const auto order = ascending_order(s.scores);
  const auto n_id = static_cast<double>(s.id_count());
  const auto n_ood = static_cast<double>(s.ood_count());
  // T = -∞: every ID score is above, no OOD score is at or below.
  std::size_t id_at_or_below = 0, ood_at_or_below = 0;
  double best = 0.5;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) {
      (s.is_id[order[j]] ? id_at_or_below : ood_at_or_below)++;
      ++j;
    }
    const double acc = 0.5 * ((n_id - static_cast<double>(id_at_or_below)) / n_id +
                              static_cast<double>(ood_at_or_below) / n_ood);
    best = std::max(best, acc);
    i = j;
  }
  return best;
}

std::vector<double> msp_baseline(const Tensor& probabilities) {
  if (probabilities.rank() != 2) throw DimensionError("msp_baseline expects [N, K] probabilities");
  const std::size_t n = probabilities.dim(0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = probabilities.item(i);
    double sum = 0.0;
    for (float v : row) sum += v;
    if (std::abs(sum - 1.0) > 1e-4) {
      throw ContractError("msp_baseline: row " + std::to_string(i) + " sums to " + format_double(sum));
    }
    out[i] = *std::max_element(row.begin(), row.end());
  }
  return out;
}

double overhead(double t_method, double t_baseline) {
  if (!(t_baseline > 0.0)) throw ContractError("overhead: baseline time must be positive");
  return (t_method - t_baseline) / t_baseline;
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty()) return histogram(values, bins, 0.0, 1.0);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return histogram(values, bins, *lo, *hi);
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(hi >= lo)) throw ContractError("histogram: empty range");
  Histogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges[bins] = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    std::size_t b = 0;
    if (width > 0.0 && v > lo) {
      b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
    }
    ++h.counts[b];
  }
  return h;
}

double lower_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ContractError("lower_quantile: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

namespace {

Timing summarize(std::vector<double> samples) {
  Timing t;
  t.samples = std::move(samples);
  const auto n = static_cast<double>(t.samples.size());
  t.mean = std::accumulate(t.samples.begin(), t.samples.end(), 0.0) / n;
  if (t.samples.size() > 1) {
    double ss = 0.0;
    for (double v : t.samples) ss += (v - t.mean) * (v - t.mean);
    t.ci99 = 2.5758293035489004 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return t;
}

double timed_call(const std::function<void()>& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Timing time_repeated(const std::function<void()>& fn, std::size_t repetitions, std::size_t warmup) {
  return time_interleaved(std::span(&fn, 1), repetitions, warmup).front();
}

std::vector<Timing> time_interleaved(std::span<const std::function<void()>> fns, std::size_t repetitions,
                                     std::size_t warmup) {
  if (repetitions == 0) throw ConfigError("timing needs at least one repetition");
  for (std::size_t i = 0; i < warmup; ++i)
    for (const auto& fn : fns) fn();
  std::vector<std::vector<double>> samples(fns.size());
  for (std::size_t i = 0; i < repetitions; ++i)
    for (std::size_t k = 0; k < fns.size(); ++k) samples[k].push_back(timed_call(fns[k]));
  std::vector<Timing> out;
  for (auto& s : samples) out.push_back(summarize(std::move(s)));
  return out;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("fit_line needs two or more (x, y) pairs");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ContractError("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

MetricsRow evaluate(const ScoredSet& s, std::string in_dist, std::string out_dist,
                    std::string method) {
  MetricsRow r{std::move(in_dist), std::move(out_dist), std::move(method)};
  r.auroc = auroc(s);
  r.tnr95 = tnr_at_95tpr(s);
  r.det_acc = detection_accuracy(s);
  r.fpr95 = 1.0 - r.tnr95;
  return r;
}

std::vector<MetricsRow> average_rows(std::span<const MetricsRow> rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsRow*>> by_method;
  for (const auto& r : rows) {
    if (r.out_dist == "average") continue;
    if (!by_method.count(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }
  std::vector<MetricsRow> out;
  for (const auto& m : order) {
    const auto& group = by_method[m];
    MetricsRow a{group.front()->in_dist, "average", m};
    for (const auto* r : group) {
      a.auroc += r->auroc;
      a.tnr95 += r->tnr95;
      a.det_acc += r->det_acc;
      a.fpr95 += r->fpr95;
    }
    const auto k = static_cast<double>(group.size());
    a.auroc /= k;
    a.tnr95 /= k;
    a.det_acc /= k;
    a.fpr95 /= k;
    out.push_back(a);
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "in_dist,out_dist,method,auroc,tnr95,det_acc,fpr95\n";
  for (const auto& r : rows) {
    out << r.in_dist << ',' << r.out_dist << ',' << r.method << ',' << format_double(r.auroc) << ','
        << format_double(r.tnr95) << ',' << format_double(r.det_acc) << ',' << format_double(r.fpr95)
        << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || trim(line) != "in_dist,out_dist,method,auroc,tnr95,det_acc,fpr95") {
    throw FormatError("metrics CSV header mismatch", 0);
  }
  offset += line.size() + 1;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) {
      const auto c = split(t, ',');
      if (c.size() != 7) throw FormatError("metrics CSV row needs 7 fields", offset);
      MetricsRow r{std::string(c[0]), std::string(c[1]), std::string(c[2])};
      double* fields[] = {&r.auroc, &r.tnr95, &r.det_acc, &r.fpr95};
      for (int k = 0; k < 4; ++k) {
        const auto v = parse_double(c[3 + k]);
        if (!v) throw FormatError("bad metric value", offset);
        *fields[k] = *v;
      }
      rows.push_back(std::move(r));
    }
    offset += line.size() + 1;
  }
  return rows;
}

}  // namespace xood
