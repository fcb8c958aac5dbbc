#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xood/linalg.hpp"
#include "xood/model.hpp"

namespace xood {

/// Per-layer statistic computed from each tap.
struct FeatureKind {
  enum class Stat { MinMax, MinOnly, MaxOnly, Positivity, Sum, Lp, SplitLp };

  Stat stat = Stat::MinMax;
  int p = 0;  // 1, 2 or 3 for Lp / SplitLp, otherwise 0

  static FeatureKind min_max() { return {}; }
  static FeatureKind lp(int p);
  static FeatureKind split_lp(int p);

  /// "minmax", "min", "max", "positivity", "sum", "l1".."l3", "split-l1".."split-l3".
  static FeatureKind parse(std::string_view name);
  std::string name() const;

  /// Values per activation layer: two for MinMax and SplitLp, one otherwise.
  std::size_t per_layer() const;
  std::size_t width(std::size_t layers) const { return per_layer() * layers; }
  std::vector<std::string> column_names(std::size_t layers) const;

  friend bool operator==(const FeatureKind&, const FeatureKind&) = default;
};

std::vector<FeatureKind> all_feature_kinds();

/// One feature row per image. For MinMax the layout is
/// (layer1 min, layer1 max, layer2 min, ...).
using FeatureVector = std::vector<double>;

FeatureVector extract_one(std::span<const std::span<const float>> layer_values, FeatureKind kind);

/// Features of every image in the traced batch, shape [N, kind.width(r)].
Matrix extract(const TapTrace& trace, FeatureKind kind);

/// Features, predictions and softmax outputs for a whole image tensor,
/// computed in batches of `batch_size` images.
struct FeaturePass {
  Matrix features;
  std::vector<std::uint32_t> predictions;
  Tensor probabilities;
};

FeaturePass compute_features(const Network& net, const Tensor& images, FeatureKind kind,
                             std::size_t batch_size = 256);

/// Indices i with predictions[i] == labels[i].
std::vector<std::size_t> correct_indices(std::span<const std::uint32_t> predictions,
                                         std::span<const std::uint32_t> labels);

/// Header "image_id,<columns...>", one row per image.
void write_feature_csv(const std::filesystem::path& path, const Matrix& features,
                       std::span<const std::string> columns, std::size_t first_id = 0);
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::int64_t> ids;
  Matrix values;
};
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace xood
