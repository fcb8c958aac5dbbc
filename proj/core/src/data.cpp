#include "xood/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "xood/error.hpp"
#include "xood/io.hpp"
#include "xood/rng.hpp"

namespace xood {

const std::vector<std::uint32_t>& Dataset::require_labels() const {
  if (!labels) throw ContractError("dataset '" + name + "' has no labels");
  return *labels;
}

void validate(const Dataset& ds, std::optional<std::size_t> num_classes) {
  if (ds.images.rank() != 4) {
    throw DimensionError("dataset '" + ds.name + "' images must be [N, C, H, W], got " +
                         shape_to_string(ds.images.shape()));
  }
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const float v = ds.images[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ContractError("dataset '" + ds.name + "' pixel " + std::to_string(i) +
                          " is outside [0, 1]");
    }
  }
  if (ds.labels) {
    if (ds.labels->size() != ds.size()) {
      throw ContractError("dataset '" + ds.name + "' has " + std::to_string(ds.labels->size()) +
                          " labels for " + std::to_string(ds.size()) + " images");
    }
    if (num_classes) {
      for (auto y : *ds.labels) {
        if (y >= *num_classes) {
          throw ContractError("dataset '" + ds.name + "' label " + std::to_string(y) +
                              " outside 0.." + std::to_string(*num_classes - 1));
        }
      }
    }
  }
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("subset: no indices");
  Shape s = ds.images.shape();
  s[0] = static_cast<std::uint32_t>(indices.size());
  Dataset out;
  out.name = ds.name;
  out.images = Tensor(s);
  if (ds.labels) out.labels.emplace();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = ds.images.item(indices[i]);
    std::copy(src.begin(), src.end(), out.images.item(i).begin());
    if (ds.labels) out.labels->push_back((*ds.labels)[indices[i]]);
  }
  return out;
}

Dataset concat(std::span<const Dataset> parts, std::string name) {
  std::vector<Tensor> images;
  bool labeled = true;
  for (const auto& p : parts) {
    images.push_back(p.images);
    labeled = labeled && p.has_labels();
  }
  Dataset out;
  out.name = std::move(name);
  out.images = concat(std::span<const Tensor>(images));
  if (labeled) {
    out.labels.emplace();
    for (const auto& p : parts) out.labels->insert(out.labels->end(), p.labels->begin(), p.labels->end());
  }
  return out;
}

// --- IDX ----------------------------------------------------------------------

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_be32(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 4 > b.size()) throw FormatError("truncated IDX header", at);
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

bool starts_with(std::span<const std::uint8_t> b, const char* magic) {
  return b.size() >= 4 && std::memcmp(b.data(), magic, 4) == 0;
}

std::uint32_t be_magic(std::span<const std::uint8_t> b) { return b.size() >= 4 ? get_be32(b, 0) : 0; }

}  // namespace

std::vector<std::uint8_t> encode_idx_images(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1) {
    throw DimensionError("IDX images must be single-channel [N, 1, H, W], got " +
                         shape_to_string(images.shape()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.dim(0)));
  put_be32(out, static_cast<std::uint32_t>(images.dim(2)));
  put_be32(out, static_cast<std::uint32_t>(images.dim(3)));
  for (float v : images.storage()) out.push_back(to_u8(v));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint32_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (auto y : labels) {
    if (y > 255) throw ContractError("IDX labels must fit in a byte");
    out.push_back(static_cast<std::uint8_t>(y));
  }
  return out;
}

Tensor decode_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = get_be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    throw FormatError("bad IDX image magic (expected 0x00000803)", 0);
  }
  const auto n = get_be32(bytes, 4), h = get_be32(bytes, 8), w = get_be32(bytes, 12);
  if (n == 0 || h == 0 || w == 0) throw FormatError("IDX image dimension is zero", 4);
  const std::uint64_t count = std::uint64_t{n} * h * w;
  if (bytes.size() - 16 != count) {
    throw FormatError("IDX image payload has " + std::to_string(bytes.size() - 16) +
                          " bytes, header implies " + std::to_string(count),
                      16 + std::min<std::uint64_t>(count, bytes.size() - 16));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  return Tensor({n, 1, h, w}, std::move(data));
}

std::vector<std::uint32_t> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  if (get_be32(bytes, 0) != kIdxLabelsMagic) {
    throw FormatError("bad IDX label magic (expected 0x00000801)", 0);
  }
  const auto n = get_be32(bytes, 4);
  if (bytes.size() - 8 != n) {
    throw FormatError("IDX label payload has " + std::to_string(bytes.size() - 8) +
                          " bytes, header says " + std::to_string(n),
                      8);
  }
  return std::vector<std::uint32_t>(bytes.begin() + 8, bytes.end());
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels) {
  Dataset ds;
  ds.name = images.stem().string();
  ds.images = decode_idx_images(read_file_bytes(images));
  if (labels) {
    ds.labels = decode_idx_labels(read_file_bytes(*labels));
    if (ds.labels->size() != ds.size()) {
      throw FormatError("label file has " + std::to_string(ds.labels->size()) +
                            " entries but image file has " + std::to_string(ds.size()),
                        4);
    }
  }
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::optional<std::filesystem::path>& labels) {
  write_file_bytes(images, encode_idx_images(ds.images));
  if (labels) write_file_bytes(*labels, encode_idx_labels(ds.require_labels()));
}

Tensor load_images(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (starts_with(bytes, "XTEN")) {
    Tensor t = decode_xten(bytes);
    if (t.rank() == 3) t = std::move(t).reshaped({t.shape()[0], 1, t.shape()[1], t.shape()[2]});
    if (t.rank() != 4) throw FormatError("XTEN images must be rank 3 or 4", 7);
    return t;
  }
  if (be_magic(bytes) == kIdxImagesMagic) return decode_idx_images(bytes);
  throw FormatError("unrecognised image file " + path.string() + " (expected IDX or XTEN)", 0);
}

std::vector<std::uint32_t> load_labels(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (starts_with(bytes, "XTEN")) {
    const Tensor t = decode_xten(bytes);
    if (t.rank() != 1) throw FormatError("XTEN labels must be rank 1", 7);
    std::vector<std::uint32_t> out;
    for (float v : t.storage()) {
      if (v < 0 || v != std::floor(v)) throw FormatError("XTEN label is not a class id", 0);
      out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
  }
  if (be_magic(bytes) == kIdxLabelsMagic) return decode_idx_labels(bytes);
  std::vector<std::uint32_t> out;
  std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::size_t offset = 0;
  for (auto line : split(text, '\n')) {
    const auto t = trim(line);
    if (!t.empty()) {
      auto v = parse_int(t);
      if (!v || *v < 0) throw FormatError("label line is not a class id: '" + std::string(t) + "'", offset);
      out.push_back(static_cast<std::uint32_t>(*v));
    }
    offset += line.size() + 1;
  }
  return out;
}

void write_labels_text(const std::filesystem::path& path, std::span<const std::uint32_t> labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  for (auto y : labels) out << y << '\n';
}

Dataset load_dataset(const std::filesystem::path& images,
                     const std::optional<std::filesystem::path>& labels, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  ds.images = load_images(images);
  if (labels) {
    ds.labels = load_labels(*labels);
    if (ds.labels->size() != ds.size()) {
      throw FormatError("label file has " + std::to_string(ds.labels->size()) +
                            " entries but image file has " + std::to_string(ds.size()),
                        0);
    }
  }
  validate(ds);
  return ds;
}

// --- generators ---------------------------------------------------------------

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "uniform") return NoiseKind::Uniform;
  if (name == "gaussian") return NoiseKind::Gaussian;
  throw ConfigError("unknown noise kind '" + std::string(name) + "' (uniform|gaussian)");
}

Dataset gen_noise(NoiseKind kind, std::size_t n, const Shape& item_shape, std::uint64_t seed) {
  if (n == 0) throw ContractError("gen_noise: n must be at least 1");
  Shape s{static_cast<std::uint32_t>(n)};
  s.insert(s.end(), item_shape.begin(), item_shape.end());
  Dataset ds;
  ds.name = kind == NoiseKind::Uniform ? "uniform" : "gaussian";
  ds.images = Tensor(s);
  Rng rng(derive_seed(seed, kind == NoiseKind::Uniform ? "noise.uniform" : "noise.gaussian"));
  for (auto& v : ds.images.storage()) {
    if (kind == NoiseKind::Uniform) {
      v = static_cast<float>(rng.uniform());
    } else {
      v = static_cast<float>(std::clamp(rng.normal(0.5, 0.25), 0.0, 1.0));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("split: fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  const auto first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (first == 0 || first == n) throw ContractError("split: a partition would be empty");
  Rng rng(derive_seed(seed, "split"));
  const auto order = rng.permutation(n);
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  return {subset(ds, a), subset(ds, b)};
}

namespace {

struct Vec2 {
  double x, y;
};

double seg_dist(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

// Distance from a point in the figure's local frame to the class stroke.
double shape_distance(std::uint32_t cls, Vec2 p, double s) {
  switch (cls) {
    case 0: return std::abs(std::hypot(p.x, p.y) - s);
    case 1: return seg_dist(p, {0, -s}, {0, s});
    case 2: return seg_dist(p, {-s, 0}, {s, 0});
    case 3: return std::min(seg_dist(p, {0, -s}, {0, s}), seg_dist(p, {-s, 0}, {s, 0}));
    case 4: {
      const double a = 0.8 * s;
      return std::min(seg_dist(p, {-a, -a}, {a, a}), seg_dist(p, {-a, a}, {a, -a}));
    }
    case 5: return std::abs(std::max(std::abs(p.x), std::abs(p.y)) - 0.8 * s);
    case 6: {
      const double a = 0.7 * s;
      return std::min({seg_dist(p, {-a, -s}, {a, -s}), seg_dist(p, {a, -s}, {-a, s}),
                       seg_dist(p, {-a, s}, {a, s})});
    }
    case 7: {
      const Vec2 a{0, -s}, b{0.9 * s, 0.7 * s}, c{-0.9 * s, 0.7 * s};
      return std::min({seg_dist(p, a, b), seg_dist(p, b, c), seg_dist(p, c, a)});
    }
    case 8: {
      const double off = s / 2.5;
      return std::min(seg_dist(p, {-s, -off}, {s, -off}), seg_dist(p, {-s, off}, {s, off}));
    }
    default: {
      const double x0 = -0.6 * s;
      return std::min(seg_dist(p, {x0, -s}, {x0, s}), seg_dist(p, {x0, s}, {0.6 * s, s}));
    }
  }
}

// Signed-ish coverage of a filled silhouette: <= 0 inside.
double silhouette_distance(std::uint32_t kind, Vec2 p, double s) {
  auto box = [](Vec2 q, double hx, double hy) {
    return std::max(std::abs(q.x) - hx, std::abs(q.y) - hy);
  };
  switch (kind) {
    case 0: {  // shirt: body plus sleeves
      const double body = box({p.x, p.y - 0.15 * s}, 0.55 * s, 0.8 * s);
      const double sleeves = box({p.x, p.y + 0.5 * s}, 0.95 * s, 0.22 * s);
      return std::min(body, sleeves);
    }
    case 1: {  // trousers: waistband plus two legs
      const double waist = box({p.x, p.y + 0.8 * s}, 0.6 * s, 0.15 * s);
      const double left = box({p.x + 0.33 * s, p.y - 0.1 * s}, 0.25 * s, 0.85 * s);
      const double right = box({p.x - 0.33 * s, p.y - 0.1 * s}, 0.25 * s, 0.85 * s);
      return std::min({waist, left, right});
    }
    case 2: {  // bag: body plus handle ring
      const double body = box({p.x, p.y - 0.25 * s}, 0.85 * s, 0.6 * s);
      const double handle = std::abs(std::hypot(p.x, p.y + 0.35 * s) - 0.45 * s) - 0.08 * s;
      return std::min(body, p.y < -0.35 * s ? handle : 1e9);
    }
    case 3: {  // shoe: low wide ellipse plus heel
      const double e = std::hypot(p.x / (0.95 * s), (p.y - 0.35 * s) / (0.35 * s)) - 1.0;
      const double heel = box({p.x + 0.6 * s, p.y - 0.05 * s}, 0.25 * s, 0.45 * s);
      return std::min(e * 0.5 * s, heel);
    }
    default: {  // dress: trapezoid
      const double t = std::clamp((p.y + s) / (2 * s), 0.0, 1.0);
      const double half = (0.3 + 0.6 * t) * s;
      return std::max(std::abs(p.x) - half, std::abs(p.y) - s);
    }
  }
}

}  // namespace

Dataset gen_blobs(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("gen_blobs: n must be at least 1");
  constexpr std::uint32_t kSide = 12;
  Dataset ds;
  ds.name = "blobs";
  ds.images = Tensor({static_cast<std::uint32_t>(n), 1, kSide, kSide});
  ds.labels.emplace(n);
  Rng rng(derive_seed(seed, "fixture.blobs"));
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = static_cast<std::uint32_t>(rng.below(2));
    (*ds.labels)[i] = cls;
    const double cx = (cls == 0 ? 3.0 : 8.0) + rng.uniform(-0.5, 0.5);
    const double cy = 5.5 + rng.uniform(-1.5, 1.5);
    const double amp = rng.uniform(0.6, 1.0);
    auto img = ds.images.item(i);
    for (std::uint32_t y = 0; y < kSide; ++y) {
      for (std::uint32_t x = 0; x < kSide; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double v = amp * std::exp(-d2 / (2 * 1.5 * 1.5)) + rng.normal(0.0, 0.05);
        img[y * kSide + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return ds;
}

Dataset gen_shapes(std::size_t n, std::uint64_t seed, std::uint32_t side) {
  if (n == 0) throw ContractError("gen_shapes: n must be at least 1");
  if (side < 8) throw ConfigError("gen_shapes: side must be at least 8");
  const double k = side / 28.0, c0 = (side - 1) / 2.0;
  Dataset ds;
  ds.name = "shapes";
  ds.images = Tensor({static_cast<std::uint32_t>(n), 1, side, side});
  ds.labels.emplace(n);
  Rng rng(derive_seed(seed, "fixture.shapes"));
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = static_cast<std::uint32_t>(rng.below(kShapeClasses));
    (*ds.labels)[i] = cls;
    const double cx = c0 + k * rng.uniform(-1.5, 1.5), cy = c0 + k * rng.uniform(-1.5, 1.5);
    const double size = k * rng.uniform(6, 10);
    const double stroke = k * rng.uniform(1.5, 3.0);
    const double intensity = rng.uniform(0.85, 1.0);
    const double angle = rng.uniform(-15, 15) * std::numbers::pi / 180.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    auto img = ds.images.item(i);
    for (std::uint32_t y = 0; y < side; ++y) {
      for (std::uint32_t x = 0; x < side; ++x) {
        const double dx = x - cx, dy = y - cy;
        const Vec2 local{ca * dx + sa * dy, -sa * dx + ca * dy};
        const double d = shape_distance(cls, local, size);
        const double cover = std::clamp(stroke / 2 - d + 0.5, 0.0, 1.0);
        img[y * side + x] = static_cast<float>(std::clamp(intensity * cover, 0.0, 1.0));
      }
    }
  }
  return ds;
}

Dataset gen_silhouettes(std::size_t n, std::uint64_t seed, std::uint32_t side) {
  if (n == 0) throw ContractError("gen_silhouettes: n must be at least 1");
  if (side < 8) throw ConfigError("gen_silhouettes: side must be at least 8");
  const double k = side / 28.0, c0 = (side - 1) / 2.0;
  Dataset ds;
  ds.name = "silhouettes";
  ds.images = Tensor({static_cast<std::uint32_t>(n), 1, side, side});
  Rng rng(derive_seed(seed, "fixture.silhouettes"));
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = static_cast<std::uint32_t>(rng.below(5));
    const double cx = c0 + k * rng.uniform(-1.5, 1.5), cy = c0 + k * rng.uniform(-1.5, 1.5);
    const double size = k * rng.uniform(9, 12);
    const double intensity = rng.uniform(0.5, 1.0);
    const double freq = rng.uniform(0.3, 1.2), phase = rng.uniform(0, 2 * std::numbers::pi);
    const double texture = rng.uniform(0.05, 0.35);
    auto img = ds.images.item(i);
    for (std::uint32_t y = 0; y < side; ++y) {
      for (std::uint32_t x = 0; x < side; ++x) {
        // image y grows downwards; silhouettes are defined with +y up
        const Vec2 local{x - cx, cy - y};
        const double d = silhouette_distance(kind, local, size);
        const double cover = std::clamp(0.5 - d, 0.0, 1.0);
        const double shade = 1.0 - texture * (0.5 + 0.5 * std::sin(freq * (x + 0.5 * y) / k + phase));
        img[y * side + x] = static_cast<float>(std::clamp(intensity * shade * cover, 0.0, 1.0));
      }
    }
  }
  return ds;
}

}  // namespace xood
