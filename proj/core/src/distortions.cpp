#include "xood/distortions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xood/error.hpp"

namespace xood {

std::string to_string(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::Geometric: return "geometric";
    case DistortionKind::Mixup: return "mixup";
    case DistortionKind::GaussianNoise: return "noise";
    case DistortionKind::GaussianBlur: return "blur";
  }
  return "?";
}

DistortionKind parse_distortion_kind(std::string_view name) {
  for (auto k : kAllDistortions) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown distortion '" + std::string(name) + "' (geometric|mixup|noise|blur)");
}

GeometricParams sample_geometric(Rng& rng, const DistortionRanges& r) {
  GeometricParams p;
  p.rotation_deg = rng.uniform(-r.max_rotation_deg, r.max_rotation_deg);
  p.shift_x = rng.uniform(-r.max_shift, r.max_shift);
  p.shift_y = rng.uniform(-r.max_shift, r.max_shift);
  p.flip = rng.bernoulli(r.flip_probability);
  p.brightness = rng.uniform(r.brightness_lo, r.brightness_hi);
  p.zoom = rng.uniform(r.zoom_lo, r.zoom_hi);
  return p;
}

AffineParams sample_affine_offset(Rng& rng, double a) {
  const double lo = std::min(0.0, 1.0 - a), hi = std::max(0.0, 1.0 - a);
  return {a, rng.uniform(lo, hi)};
}

AffineParams sample_affine(Rng& rng, const DistortionRanges& r) {
  const double a = std::exp(rng.uniform(std::log(r.affine_a_lo), std::log(r.affine_a_hi)));
  return sample_affine_offset(rng, a);
}

NoiseParams sample_noise(Rng& rng, const DistortionRanges& r) {
  NoiseParams p;
  p.variance = rng.uniform(r.noise_variance_lo, r.noise_variance_hi);
  p.affine = sample_affine(rng, r);
  return p;
}

BlurParams sample_blur(Rng& rng, const DistortionRanges& r) {
  BlurParams p;
  p.variance = rng.uniform(r.blur_variance_lo, r.blur_variance_hi);
  p.affine = sample_affine(rng, r);
  return p;
}

namespace {

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Bilinear sample of one plane; pixels outside the frame read as 0.
double sample_bilinear(const float* plane, std::size_t h, std::size_t w, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
  const double ax = x - fx, ay = y - fy;
  auto px = [&](std::ptrdiff_t xi, std::ptrdiff_t yi) -> double {
    if (xi < 0 || yi < 0 || xi >= static_cast<std::ptrdiff_t>(w) || yi >= static_cast<std::ptrdiff_t>(h)) {
      return 0.0;
    }
    return plane[static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xi)];
  };
  double v = 0.0;
  if ((1 - ax) * (1 - ay) != 0.0) v += (1 - ax) * (1 - ay) * px(x0, y0);
  if (ax * (1 - ay) != 0.0) v += ax * (1 - ay) * px(x0 + 1, y0);
  if ((1 - ax) * ay != 0.0) v += (1 - ax) * ay * px(x0, y0 + 1);
  if (ax * ay != 0.0) v += ax * ay * px(x0 + 1, y0 + 1);
  return v;
}

void check_item(std::span<const float> in, std::span<float> out, std::size_t c, std::size_t h,
                std::size_t w) {
  if (in.size() != c * h * w || out.size() != in.size()) {
    throw DimensionError("distortion: item buffer does not match [C, H, W]");
  }
}

std::vector<std::size_t> item_shape(const Dataset& ds) {
  if (ds.images.rank() != 4) throw DimensionError("distortion: images must be [N, C, H, W]");
  return {ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)};
}

template <typename Fn>
Dataset per_image(const Dataset& ds, std::uint64_t seed, const std::string& tag, Fn fn) {
  const auto s = item_shape(ds);
  Dataset out{ds.name + "+" + tag, Tensor(ds.images.shape()), ds.labels};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    fn(rng, ds.images.item(i), out.images.item(i), s[0], s[1], s[2]);
  }
  return out;
}

}  // namespace

void apply_geometric(std::span<const float> in, std::span<float> out, std::size_t channels,
                     std::size_t height, std::size_t width, const GeometricParams& p) {
  check_item(in, out, channels, height, width);
  if (!(p.zoom > 0.0)) throw ContractError("geometric: zoom must be positive");
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double theta = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double tx = p.shift_x * static_cast<double>(width);
  const double ty = p.shift_y * static_cast<double>(height);
  const std::size_t plane = height * width;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      // Invert shift, zoom and rotation in turn.
      const double u = (static_cast<double>(x) - tx - cx) / p.zoom;
      const double v = (static_cast<double>(y) - ty - cy) / p.zoom;
      double sx = cs * u + sn * v + cx;
      const double sy = -sn * u + cs * v + cy;
      if (p.flip) sx = static_cast<double>(width) - 1.0 - sx;
      for (std::size_t c = 0; c < channels; ++c) {
        const double val = sample_bilinear(in.data() + c * plane, height, width, sx, sy);
        out[c * plane + y * width + x] = clip01(val * p.brightness);
      }
    }
  }
}

void apply_affine(std::span<float> values, const AffineParams& p) {
  for (auto& v : values) v = clip01(p.a * static_cast<double>(v) + p.b);
}

void apply_noise(std::span<const float> in, std::span<float> out, const NoiseParams& p, Rng& rng) {
  if (in.size() != out.size()) throw DimensionError("noise: buffer size mismatch");
  if (p.variance < 0.0) throw ContractError("noise: negative variance");
  const double sd = std::sqrt(p.variance);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double noisy = static_cast<double>(in[i]) + (sd > 0.0 ? rng.normal(0.0, sd) : 0.0);
    out[i] = clip01(p.affine.a * noisy + p.affine.b);
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ContractError("gaussian_kernel: sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  auto m = i % period;
  if (m < 0) m += period;
  return m < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(m)
                                            : static_cast<std::size_t>(period - 1 - m);
}

void gaussian_blur(std::span<const float> in, std::span<float> out, std::size_t channels,
                   std::size_t height, std::size_t width, double sigma) {
  check_item(in, out, channels, height, width);
  const auto k = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  std::vector<double> tmp(height * width);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = in.data() + c * height * width;
    float* dst = out.data() + c * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        double s = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          const auto xi = reflect_index(static_cast<std::ptrdiff_t>(x) + t, width);
          s += k[static_cast<std::size_t>(t + radius)] * src[y * width + xi];
        }
        tmp[y * width + x] = s;
      }
    }
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        double s = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          const auto yi = reflect_index(static_cast<std::ptrdiff_t>(y) + t, height);
          s += k[static_cast<std::size_t>(t + radius)] * tmp[yi * width + x];
        }
        dst[y * width + x] = static_cast<float>(s);
      }
    }
  }
}

void apply_blur(std::span<const float> in, std::span<float> out, std::size_t channels,
                std::size_t height, std::size_t width, const BlurParams& p) {
  gaussian_blur(in, out, channels, height, width, std::sqrt(p.variance));
  apply_affine(out, p.affine);
}

Dataset apply_mixup(const Dataset& ds, std::span<const std::size_t> partners,
                    std::span<const double> weights) {
  const std::size_t n = ds.size();
  if (n < 2) throw ContractError("mixup needs at least 2 images");
  if (partners.size() != n || weights.size() != n) throw DimensionError("mixup: one partner and weight per image");
  Dataset out{ds.name + "+mixup", Tensor(ds.images.shape()), std::nullopt};
  std::vector<std::uint32_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = partners[i];
    const double w = weights[i];
    if (b >= n) throw ContractError("mixup: partner index out of range");
    if (!(w >= 0.0 && w <= 1.0)) throw ContractError("mixup: weight outside [0, 1]");
    const auto xa = ds.images.item(i), xb = ds.images.item(b);
    auto dst = out.images.item(i);
    for (std::size_t j = 0; j < dst.size(); ++j) {
      dst[j] = static_cast<float>(w * xa[j] + (1.0 - w) * xb[j]);
    }
    if (ds.labels) labels.push_back(w >= 0.5 ? (*ds.labels)[i] : (*ds.labels)[b]);
  }
  if (ds.labels) out.labels = std::move(labels);
  return out;
}

Dataset geometric(const Dataset& ds, std::uint64_t seed, const DistortionRanges& r) {
  return per_image(ds, seed, "geometric",
                   [&](Rng& rng, auto in, auto out, std::size_t c, std::size_t h, std::size_t w) {
                     apply_geometric(in, out, c, h, w, sample_geometric(rng, r));
                   });
}

Dataset mixup(const Dataset& ds, std::uint64_t seed) {
  Rng partner_rng(derive_seed(seed, "mixup.partner"));
  const auto partners = partner_rng.permutation(ds.size());
  std::vector<double> weights(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    weights[i] = rng.uniform();
  }
  return apply_mixup(ds, partners, weights);
}

Dataset gaussian_noise_affine(const Dataset& ds, std::uint64_t seed, const DistortionRanges& r) {
  return per_image(ds, seed, "noise",
                   [&](Rng& rng, auto in, auto out, std::size_t, std::size_t, std::size_t) {
                     const auto p = sample_noise(rng, r);
                     apply_noise(in, out, p, rng);
                   });
}

Dataset gaussian_blur_affine(const Dataset& ds, std::uint64_t seed, const DistortionRanges& r) {
  return per_image(ds, seed, "blur",
                   [&](Rng& rng, auto in, auto out, std::size_t c, std::size_t h, std::size_t w) {
                     apply_blur(in, out, c, h, w, sample_blur(rng, r));
                   });
}

Dataset distort(const Dataset& ds, DistortionKind kind, std::uint64_t seed,
                const DistortionRanges& r) {
  switch (kind) {
    case DistortionKind::Geometric: return geometric(ds, seed, r);
    case DistortionKind::Mixup: return mixup(ds, seed);
    case DistortionKind::GaussianNoise: return gaussian_noise_affine(ds, seed, r);
    case DistortionKind::GaussianBlur: return gaussian_blur_affine(ds, seed, r);
  }
  throw ConfigError("unknown distortion kind");
}

}  // namespace xood
