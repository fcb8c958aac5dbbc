#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xood/data.hpp"
#include "xood/rng.hpp"

namespace xood {

enum class DistortionKind { Geometric, Mixup, GaussianNoise, GaussianBlur };

inline constexpr std::array<DistortionKind, 4> kAllDistortions{
    DistortionKind::Geometric, DistortionKind::Mixup, DistortionKind::GaussianNoise,
    DistortionKind::GaussianBlur};

/// "geometric", "mixup", "noise", "blur".
std::string to_string(DistortionKind kind);
DistortionKind parse_distortion_kind(std::string_view name);

/// Sampling ranges. The defaults are the standard configuration.
struct DistortionRanges {
  double max_rotation_deg = 90.0;
  double max_shift = 0.2;  // fraction of width / height
  double flip_probability = 0.5;
  double brightness_lo = 0.2, brightness_hi = 2.0;
  double zoom_lo = 0.9, zoom_hi = 1.1;
  double noise_variance_lo = 0.0, noise_variance_hi = 2.0;
  double blur_variance_lo = 0.2, blur_variance_hi = 5.0;
  double affine_a_lo = 0.125, affine_a_hi = 8.0;  // log-uniform
};

struct GeometricParams {
  bool flip = false;
  double rotation_deg = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  double brightness = 1.0;
};

/// x <- a·x + b, constant for one image.
struct AffineParams {
  double a = 1.0;
  double b = 0.0;
};

struct NoiseParams {
  double variance = 0.0;
  AffineParams affine;
};

struct BlurParams {
  double variance = 0.2;
  AffineParams affine;
};

GeometricParams sample_geometric(Rng& rng, const DistortionRanges& r = {});
/// a log-uniform in [a_lo, a_hi]; b ~ U(min(0, 1 - a), max(0, 1 - a)).
AffineParams sample_affine(Rng& rng, const DistortionRanges& r = {});
AffineParams sample_affine_offset(Rng& rng, double a);
NoiseParams sample_noise(Rng& rng, const DistortionRanges& r = {});
BlurParams sample_blur(Rng& rng, const DistortionRanges& r = {});

// Single-image kernels over a [C, H, W] item; `out` must not alias `in`.

/// flip -> rotate -> zoom -> shift about the image centre, resampled
/// bilinearly with zero fill, then brightness; clipped to [0, 1].
void apply_geometric(std::span<const float> in, std::span<float> out, std::size_t channels,
                     std::size_t height, std::size_t width, const GeometricParams& p);

/// Adds N(0, variance) per pixel from `rng`, then the affine map; clipped.
void apply_noise(std::span<const float> in, std::span<float> out, const NoiseParams& p, Rng& rng);

/// Normalised Gaussian weights on [-⌈3σ⌉, ⌈3σ⌉].
std::vector<double> gaussian_kernel(double sigma);

/// Reflected index "d c b a | a b c d | d c b a" for any integer position.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

/// Separable blur with reflected boundaries, no clipping.
void gaussian_blur(std::span<const float> in, std::span<float> out, std::size_t channels,
                   std::size_t height, std::size_t width, double sigma);

/// Blur, then the affine map; clipped.
void apply_blur(std::span<const float> in, std::span<float> out, std::size_t channels,
                std::size_t height, std::size_t width, const BlurParams& p);

void apply_affine(std::span<float> values, const AffineParams& p);

/// x' = w·x_a + (1 - w)·x_b; label from a when w >= 0.5, else from b.
/// `partners[i]` is b for image i.
Dataset apply_mixup(const Dataset& ds, std::span<const std::size_t> partners,
                    std::span<const double> weights);

// Whole-dataset distortions. Image i draws from the stream derive_seed(seed, i),
// so results do not depend on batch order.

Dataset geometric(const Dataset& ds, std::uint64_t seed, const DistortionRanges& r = {});
Dataset mixup(const Dataset& ds, std::uint64_t seed);
Dataset gaussian_noise_affine(const Dataset& ds, std::uint64_t seed, const DistortionRanges& r = {});
Dataset gaussian_blur_affine(const Dataset& ds, std::uint64_t seed, const DistortionRanges& r = {});

Dataset distort(const Dataset& ds, DistortionKind kind, std::uint64_t seed,
                const DistortionRanges& r = {});

}  // namespace xood
