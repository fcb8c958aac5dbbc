#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xood/tensor.hpp"

namespace xood {

/// Images [N, C, H, W] with pixels in [0, 1], optional class labels.
struct Dataset {
  std::string name;
  Tensor images;
  std::optional<std::vector<std::uint32_t>> labels;

  std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
  bool has_labels() const { return labels.has_value(); }
  const std::vector<std::uint32_t>& require_labels() const;
};

/// Checks the pixel range and label length; optionally the label range.
void validate(const Dataset& ds, std::optional<std::size_t> num_classes = std::nullopt);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);
Dataset concat(std::span<const Dataset> parts, std::string name);

// IDX (big-endian) files: images magic 0x00000803, labels 0x00000801.
inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> encode_idx_images(const Tensor& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint32_t> labels);
/// u8 pixels / 255, with a channel axis of 1 added.
Tensor decode_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint32_t> decode_idx_labels(std::span<const std::uint8_t> bytes);

Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels = std::nullopt);
void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::optional<std::filesystem::path>& labels = std::nullopt);

/// Images from IDX or XTEN, chosen by the file's magic bytes.
Tensor load_images(const std::filesystem::path& path);
/// Labels from IDX, a 1-D XTEN tensor, or text with one integer per line.
std::vector<std::uint32_t> load_labels(const std::filesystem::path& path);
void write_labels_text(const std::filesystem::path& path, std::span<const std::uint32_t> labels);

Dataset load_dataset(const std::filesystem::path& images,
                     const std::optional<std::filesystem::path>& labels, std::string name);

enum class NoiseKind { Uniform, Gaussian };

NoiseKind parse_noise_kind(std::string_view name);

/// Uniform: i.i.d. U[0, 1]. Gaussian: i.i.d. Normal(0.5, 0.25) clipped to [0, 1].
Dataset gen_noise(NoiseKind kind, std::size_t n, const Shape& item_shape, std::uint64_t seed);

/// Seeded shuffle, then the first round(fraction * N) items go to the first part.
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);

// Procedural fixtures, so the repository needs no downloaded data.

/// Two classes of 12x12 images: a bright Gaussian bump on the left (class 0)
/// or the right (class 1) half. Linearly separable.
Dataset gen_blobs(std::size_t n, std::uint64_t seed);

/// Ten classes of side x side (default 28x28) anti-aliased stroke figures on
/// a black background (ring, vertical bar, horizontal bar, plus, cross,
/// square, zigzag, triangle, equals, corner), with random position, scale,
/// stroke width, intensity and slant.
Dataset gen_shapes(std::size_t n, std::uint64_t seed, std::uint32_t side = 28);
inline constexpr std::size_t kShapeClasses = 10;

/// Unlabeled images of large filled, textured silhouettes (garment- and
/// bag-like outlines). Structurally unlike gen_shapes and gen_blobs.
Dataset gen_silhouettes(std::size_t n, std::uint64_t seed, std::uint32_t side = 28);

}  // namespace xood
