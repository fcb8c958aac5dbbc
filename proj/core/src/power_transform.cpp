#include "xood/power_transform.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "xood/error.hpp"
#include "xood/io.hpp"

namespace xood {

double yeo_johnson(double x, double lambda) {
  if (x >= 0.0) {
    if (lambda == 0.0) return std::log1p(x);
    return std::expm1(lambda * std::log1p(x)) / lambda;
  }
  const double e = 2.0 - lambda;
  if (e == 0.0) return -std::log1p(-x);
  return -std::expm1(e * std::log1p(-x)) / e;
}

double yeo_johnson_log_likelihood(std::span<const double> x, double lambda) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += yeo_johnson(v, lambda);
  mean /= n;
  double var = 0.0, log_term = 0.0;
  for (double v : x) {
    const double t = yeo_johnson(v, lambda) - mean;
    var += t * t;
    log_term += std::copysign(std::log1p(std::abs(v)), v);
  }
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * log_term;
}

double fit_yeo_johnson_lambda(std::span<const double> x, double lo, double hi, double tol) {
  auto f = [&](double l) { return yeo_johnson_log_likelihood(x, l); };

  // Coarse scan, then golden section inside the best cell's neighbourhood.
  constexpr int kCells = 20;
  const double step = (hi - lo) / kCells;
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kCells; ++i) {
    const double v = f(lo + i * step);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = std::max(lo, lo + (best - 1) * step);
  double b = std::min(hi, lo + (best + 1) * step);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (a + b);
  // Interval ends can win when the optimum sits on the search boundary.
  double arg = mid, val = f(mid);
  for (double cand : {lo, hi}) {
    const double v = f(cand);
    if (v > val) {
      val = v;
      arg = cand;
    }
  }
  return arg;
}

PowerTransform fit_power_transform(const Matrix& features) {
  if (features.rows() < 10) {
    throw ContractError("fit_power_transform: need at least 10 rows, got " +
                        std::to_string(features.rows()));
  }
  const std::size_t n = features.rows(), d = features.cols();
  PowerTransform pt;
  pt.lambda.resize(d);
  pt.mean.resize(d);
  pt.std.resize(d);
  pt.flagged.assign(d, false);
  for (std::size_t c = 0; c < d; ++c) {
    const auto col = features.column(c);
    for (std::size_t r = 0; r < n; ++r) {
      if (!std::isfinite(col[r])) {
        throw ContractError("fit_power_transform: non-finite value at row " + std::to_string(r) +
                            ", column " + std::to_string(c));
      }
    }
    const double lambda = fit_yeo_johnson_lambda(col);
    double mean = 0.0;
    std::vector<double> t(n);
    for (std::size_t r = 0; r < n; ++r) {
      t[r] = yeo_johnson(col[r], lambda);
      mean += t[r];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd >= kStdGuard)) {
      sd = 1.0;
      pt.flagged[c] = true;
    }
    pt.lambda[c] = lambda;
    pt.mean[c] = mean;
    pt.std[c] = sd;
  }
  return pt;
}

void PowerTransform::apply_row(std::span<const double> in, std::span<double> out) const {
  if (in.size() != dims()) {
    throw DimensionError("power transform expects " + std::to_string(dims()) + " columns, got " +
                         std::to_string(in.size()));
  }
  for (std::size_t c = 0; c < in.size(); ++c) {
    out[c] = (yeo_johnson(in[c], lambda[c]) - mean[c]) / std[c];
  }
}

Matrix PowerTransform::apply(const Matrix& features) const {
  if (features.cols() != dims()) {
    throw DimensionError("power transform expects " + std::to_string(dims()) + " columns, got " +
                         std::to_string(features.cols()));
  }
  Matrix out(features.rows(), features.cols());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c])) {
        throw ContractError("power transform: non-finite input at row " + std::to_string(r) +
                            ", column " + std::to_string(c));
      }
    }
    apply_row(row, out.row(r));
  }
  return out;
}

std::string PowerTransform::to_text() const {
  std::ostringstream os;
  for (std::size_t c = 0; c < dims(); ++c) {
    os << c << ' ' << format_double(lambda[c]) << ' ' << format_double(mean[c]) << ' '
       << format_double(std[c]);
    if (flagged[c]) os << " flagged";
    os << '\n';
  }
  return os.str();
}

PowerTransform PowerTransform::from_text(std::string_view text) {
  PowerTransform pt;
  std::uint64_t offset = 0;
  for (auto line : split(text, '\n')) {
    const auto t = trim(line);
    if (!t.empty()) {
      std::vector<std::string_view> fields;
      for (auto f : split(t, ' ')) {
        if (!f.empty()) fields.push_back(f);
      }
      if (fields.size() < 4 || fields.size() > 5) throw FormatError("power transform line needs 4 fields", offset);
      auto idx = parse_int(fields[0]);
      auto l = parse_double(fields[1]), m = parse_double(fields[2]), s = parse_double(fields[3]);
      if (!idx || !l || !m || !s || static_cast<std::size_t>(*idx) != pt.dims()) {
        throw FormatError("malformed power transform line", offset);
      }
      pt.lambda.push_back(*l);
      pt.mean.push_back(*m);
      pt.std.push_back(*s);
      pt.flagged.push_back(fields.size() == 5 && fields[4] == "flagged");
    }
    offset += line.size() + 1;
  }
  return pt;
}

}  // namespace xood
