#include "xood/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "xood/error.hpp"

namespace xood {

namespace {

static_assert(std::endian::native == std::endian::little,
              "XTEN encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::uint64_t base) : bytes_(bytes), base_(base) {}

  std::uint64_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated input while reading ") + what, offset());
    }
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_xten(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(7 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), {'X', 'T', 'E', 'N', kXtenVersion, kXtenDtypeF32,
                         static_cast<std::uint8_t>(t.rank())});
  for (auto d : t.shape()) put_u32(out, d);
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.storage().data());
  out.insert(out.end(), p, p + t.size() * sizeof(float));
  return out;
}

Tensor decode_xten(std::span<const std::uint8_t> bytes, std::uint64_t base_offset) {
  Reader r(bytes, base_offset);
  auto magic = r.take(4, "XTEN magic");
  if (std::memcmp(magic.data(), "XTEN", 4) != 0) {
    throw FormatError("bad XTEN magic", base_offset);
  }
  const auto version_at = r.offset();
  if (r.u8("XTEN version") != kXtenVersion) throw FormatError("unsupported XTEN version", version_at);
  const auto dtype_at = r.offset();
  if (r.u8("XTEN dtype") != kXtenDtypeF32) throw FormatError("unsupported XTEN dtype", dtype_at);
  const auto ndim_at = r.offset();
  const std::uint8_t ndim = r.u8("XTEN ndim");
  if (ndim == 0) throw FormatError("XTEN tensor has zero dimensions", ndim_at);
  Shape shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto at = r.offset();
    d = r.u32("XTEN dimension");
    if (d == 0) throw FormatError("XTEN dimension is zero", at);
    count *= d;
  }
  if (count > r.remaining() / sizeof(float)) {
    throw FormatError("XTEN payload shorter than its shape requires", r.offset());
  }
  auto payload = r.take(count * sizeof(float), "XTEN payload");
  std::vector<float> data(count);
  std::memcpy(data.data(), payload.data(), payload.size());
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing " + path.string());
}

void write_xten(const std::filesystem::path& path, const Tensor& t) {
  write_file_bytes(path, encode_xten(t));
}

Tensor read_xten(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  Tensor t = decode_xten(bytes);
  const auto used = 7 + 4 * t.rank() + 4 * t.size();
  if (used != bytes.size()) throw FormatError("trailing bytes after XTEN payload", used);
  return t;
}

// --- Manifest -------------------------------------------------------------

void Manifest::set(std::string key, std::string value) {
  if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
    throw ContractError("manifest key/value must be single-line and key must not contain '='");
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void Manifest::set(std::string key, double value) { set(std::move(key), format_double(value)); }
void Manifest::set(std::string key, std::int64_t value) {
  set(std::move(key), std::to_string(value));
}
void Manifest::set(std::string key, std::uint64_t value) {
  set(std::move(key), std::to_string(value));
}

bool Manifest::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> Manifest::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& Manifest::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw FormatError("manifest is missing key '" + std::string(key) + "'", 0);
}

double Manifest::get_double(std::string_view key) const {
  const auto& v = get(key);
  auto d = parse_double(v);
  if (!d) throw FormatError("manifest key '" + std::string(key) + "' is not a number: " + v, 0);
  return *d;
}

std::int64_t Manifest::get_int(std::string_view key) const {
  const auto& v = get(key);
  auto i = parse_int(v);
  if (!i) throw FormatError("manifest key '" + std::string(key) + "' is not an integer: " + v, 0);
  return *i;
}

std::uint64_t Manifest::get_uint(std::string_view key) const {
  const auto& v = get(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw FormatError("manifest key '" + std::string(key) + "' is not unsigned: " + v, 0);
  }
  return out;
}

std::string Manifest::to_text() const {
  std::string s;
  for (const auto& [k, v] : entries_) {
    s += k;
    s += '=';
    s += v;
    s += '\n';
  }
  return s;
}

Manifest Manifest::parse(std::string_view text, std::uint64_t base_offset) {
  Manifest m;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto stripped = trim(line);
    if (!stripped.empty() && stripped.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw FormatError("manifest line without '='", base_offset + pos);
      }
      m.entries_.emplace_back(std::string(trim(line.substr(0, eq))),
                              std::string(trim(line.substr(eq + 1))));
    }
    pos = end + 1;
  }
  return m;
}

// --- Bundle ---------------------------------------------------------------

const Tensor& Bundle::blob(std::string_view name) const {
  for (const auto& [n, t] : blobs) {
    if (n == name) return t;
  }
  throw FormatError("bundle is missing blob '" + std::string(name) + "'", 0);
}

bool Bundle::has_blob(std::string_view name) const {
  return std::any_of(blobs.begin(), blobs.end(), [&](const auto& b) { return b.first == name; });
}

std::vector<std::uint8_t> encode_bundle(const Bundle& b) {
  if (b.magic.size() != 4) throw ContractError("bundle magic must be four characters");
  std::vector<std::uint8_t> out(b.magic.begin(), b.magic.end());
  out.push_back(0x01);
  const std::string text = b.manifest.to_text();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put_u32(out, static_cast<std::uint32_t>(b.blobs.size()));
  for (const auto& [name, t] : b.blobs) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const auto enc = encode_xten(t);
    put_u64(out, enc.size());
    out.insert(out.end(), enc.begin(), enc.end());
  }
  return out;
}

Bundle decode_bundle(std::span<const std::uint8_t> bytes, std::string_view expected_magic) {
  Reader r(bytes, 0);
  Bundle b;
  auto magic = r.take(4, "container magic");
  b.magic.assign(magic.begin(), magic.end());
  if (b.magic != expected_magic) {
    throw FormatError("expected a '" + std::string(expected_magic) + "' container, found '" +
                          b.magic + "'",
                      0);
  }
  if (r.u8("container version") != 0x01) throw FormatError("unsupported container version", 4);
  const auto manifest_len = r.u32("manifest length");
  const auto manifest_at = r.offset();
  auto text = r.take(manifest_len, "manifest");
  b.manifest = Manifest::parse(
      std::string_view(reinterpret_cast<const char*>(text.data()), text.size()), manifest_at);
  const auto count = r.u32("blob count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32("blob name length");
    auto name = r.take(name_len, "blob name");
    const auto len = r.u64("blob length");
    const auto at = r.offset();
    if (len > r.remaining()) throw FormatError("blob extends past end of file", at);
    auto payload = r.take(static_cast<std::size_t>(len), "blob payload");
    b.blobs.emplace_back(std::string(name.begin(), name.end()), decode_xten(payload, at));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last blob", r.offset());
  return b;
}

void write_bundle(const std::filesystem::path& path, const Bundle& b) {
  write_file_bytes(path, encode_bundle(b));
}

Bundle read_bundle(const std::filesystem::path& path, std::string_view expected_magic) {
  return decode_bundle(read_file_bytes(path), expected_magic);
}

// --- text helpers ---------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace xood
