#include "xood/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "xood/error.hpp"
#include "xood/io.hpp"

namespace xood {

FeatureKind FeatureKind::lp(int p) {
  if (p < 1 || p > 3) throw ConfigError("Lp norm order must be 1, 2 or 3");
  return {Stat::Lp, p};
}

FeatureKind FeatureKind::split_lp(int p) {
  if (p < 1 || p > 3) throw ConfigError("split Lp norm order must be 1, 2 or 3");
  return {Stat::SplitLp, p};
}

FeatureKind FeatureKind::parse(std::string_view name) {
  if (name == "minmax") return {Stat::MinMax, 0};
  if (name == "min") return {Stat::MinOnly, 0};
  if (name == "max") return {Stat::MaxOnly, 0};
  if (name == "positivity") return {Stat::Positivity, 0};
  if (name == "sum") return {Stat::Sum, 0};
  if (name.size() == 2 && name[0] == 'l') return lp(name[1] - '0');
  if (name.size() == 8 && name.substr(0, 7) == "split-l") return split_lp(name[7] - '0');
  throw ConfigError("unknown feature kind '" + std::string(name) +
                    "' (minmax|min|max|positivity|sum|l1..l3|split-l1..split-l3)");
}

std::string FeatureKind::name() const {
  switch (stat) {
    case Stat::MinMax: return "minmax";
    case Stat::MinOnly: return "min";
    case Stat::MaxOnly: return "max";
    case Stat::Positivity: return "positivity";
    case Stat::Sum: return "sum";
    case Stat::Lp: return "l" + std::to_string(p);
    case Stat::SplitLp: return "split-l" + std::to_string(p);
  }
  return "?";
}

std::size_t FeatureKind::per_layer() const {
  return stat == Stat::MinMax || stat == Stat::SplitLp ? 2 : 1;
}

std::vector<std::string> FeatureKind::column_names(std::size_t layers) const {
  std::vector<std::string> out;
  for (std::size_t j = 1; j <= layers; ++j) {
    const std::string p = "layer" + std::to_string(j) + "_";
    switch (stat) {
      case Stat::MinMax:
        out.push_back(p + "min");
        out.push_back(p + "max");
        break;
      case Stat::SplitLp:
        out.push_back(p + "l" + std::to_string(this->p) + "pos");
        out.push_back(p + "l" + std::to_string(this->p) + "neg");
        break;
      default: out.push_back(p + name()); break;
    }
  }
  return out;
}

std::vector<FeatureKind> all_feature_kinds() {
  std::vector<FeatureKind> out{{FeatureKind::Stat::MinMax, 0},
                               {FeatureKind::Stat::MinOnly, 0},
                               {FeatureKind::Stat::MaxOnly, 0},
                               {FeatureKind::Stat::Positivity, 0},
                               {FeatureKind::Stat::Sum, 0}};
  for (int p = 1; p <= 3; ++p) out.push_back(FeatureKind::lp(p));
  for (int p = 1; p <= 3; ++p) out.push_back(FeatureKind::split_lp(p));
  return out;
}

namespace {

double lp_norm(double power_sum, int p) {
  switch (p) {
    case 1: return power_sum;
    case 2: return std::sqrt(power_sum);
    default: return std::cbrt(power_sum);
  }
}

double abs_pow(double x, int p) {
  const double a = std::abs(x);
  return p == 1 ? a : (p == 2 ? a * a : a * a * a);
}

}  // namespace

namespace {

// Eight-lane min/max reduction.
std::pair<float, float> min_max(std::span<const float> v) {
  constexpr std::size_t kLanes = 8;
  std::array<float, kLanes> lo, hi;
  lo.fill(v[0]);
  hi.fill(v[0]);
  std::size_t i = 0;
  for (; i + kLanes <= v.size(); i += kLanes) {
    for (std::size_t k = 0; k < kLanes; ++k) {
      lo[k] = v[i + k] < lo[k] ? v[i + k] : lo[k];
      hi[k] = v[i + k] > hi[k] ? v[i + k] : hi[k];
    }
  }
  for (; i < v.size(); ++i) {
    lo[0] = v[i] < lo[0] ? v[i] : lo[0];
    hi[0] = v[i] > hi[0] ? v[i] : hi[0];
  }
  return {*std::min_element(lo.begin(), lo.end()), *std::max_element(hi.begin(), hi.end())};
}

}  // namespace

FeatureVector extract_one(std::span<const std::span<const float>> layers, FeatureKind kind) {
  if (layers.empty()) throw ContractError("extract: trace has no activation layers");
  FeatureVector out;
  out.reserve(kind.width(layers.size()));
  using Stat = FeatureKind::Stat;
  for (const auto& values : layers) {
    if (values.empty()) throw ContractError("extract: empty tap tensor");
    switch (kind.stat) {
      case Stat::MinMax:
      case Stat::MinOnly:
      case Stat::MaxOnly: {
        const auto [lo, hi] = min_max(values);
        if (kind.stat != Stat::MaxOnly) out.push_back(lo);
        if (kind.stat != Stat::MinOnly) out.push_back(hi);
        break;
      }
      case Stat::Positivity: {
        const auto positive = std::count_if(values.begin(), values.end(), [](float v) { return v > 0.0f; });
        out.push_back(static_cast<double>(positive) / static_cast<double>(values.size()));
        break;
      }
      case Stat::Sum: {
        double s = 0.0;
        for (float v : values) s += v;
        out.push_back(s);
        break;
      }
      case Stat::Lp: {
        double s = 0.0;
        for (float v : values) s += abs_pow(v, kind.p);
        out.push_back(lp_norm(s, kind.p));
        break;
      }
      case Stat::SplitLp: {
        double pos = 0.0, neg = 0.0;
        for (float v : values) {
          if (v > 0.0f) pos += abs_pow(v, kind.p);
          else if (v < 0.0f) neg += abs_pow(v, kind.p);
        }
        out.push_back(lp_norm(pos, kind.p));
        out.push_back(lp_norm(neg, kind.p));
        break;
      }
    }
  }
  return out;
}

Matrix extract(const TapTrace& trace, FeatureKind kind) {
  if (trace.taps.empty()) throw ContractError("extract: trace has no activation layers");
  const std::size_t n = trace.taps.front().dim(0);
  const std::size_t r = trace.taps.size();
  Matrix out(n, kind.width(r));
  std::vector<std::span<const float>> layers(r);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r; ++j) layers[j] = trace.taps[j].item(i);
    const auto row = extract_one(layers, kind);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

FeaturePass compute_features(const Network& net, const Tensor& images, FeatureKind kind,
                             std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (images.empty()) throw ContractError("compute_features: no images");
  const std::size_t n = images.dim(0);
  FeaturePass out;
  out.features = Matrix(n, kind.width(net.activation_count()));
  out.predictions.reserve(n);
  std::vector<Tensor> probs;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    auto result = forward_with_taps(net, images.slice(b, e));
    const auto f = extract(result.trace, kind);
    std::copy(f.storage().begin(), f.storage().end(),
              out.features.storage().begin() + static_cast<std::ptrdiff_t>(b * f.cols()));
    out.predictions.insert(out.predictions.end(), result.predictions.begin(), result.predictions.end());
    probs.push_back(std::move(result.trace.probabilities));
  }
  out.probabilities = concat(probs);
  return out;
}

std::vector<std::size_t> correct_indices(std::span<const std::uint32_t> predictions,
                                         std::span<const std::uint32_t> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction/label count mismatch");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) out.push_back(i);
  }
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const Matrix& features,
                       std::span<const std::string> columns, std::size_t first_id) {
  if (columns.size() != features.cols()) throw DimensionError("feature CSV: column count mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "image_id";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    out << first_id + r;
    for (double v : features.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  FeatureTable t;
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line)) throw FormatError("feature CSV is empty", 0);
  auto header = split(trim(line), ',');
  if (header.empty() || header[0] != "image_id") throw FormatError("feature CSV header must start with image_id", 0);
  for (std::size_t i = 1; i < header.size(); ++i) t.columns.emplace_back(header[i]);
  offset += line.size() + 1;
  std::vector<double> values;
  while (std::getline(in, line)) {
    const auto trimmed = trim(line);
    if (!trimmed.empty()) {
      auto cells = split(trimmed, ',');
      if (cells.size() != t.columns.size() + 1) throw FormatError("feature CSV row has wrong width", offset);
      auto id = parse_int(cells[0]);
      if (!id) throw FormatError("bad image_id", offset);
      t.ids.push_back(*id);
      for (std::size_t i = 1; i < cells.size(); ++i) {
        auto v = parse_double(cells[i]);
        if (!v) throw FormatError("bad feature value '" + std::string(cells[i]) + "'", offset);
        values.push_back(*v);
      }
    }
    offset += line.size() + 1;
  }
  t.values = Matrix(t.ids.size(), t.columns.size(), std::move(values));
  return t;
}

}  // namespace xood
