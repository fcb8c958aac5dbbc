#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xood/tensor.hpp"

namespace xood {

// XTEN tensor encoding:
//   "XTEN" | version 0x01 | dtype 0x00 (f32) | ndim u8 | ndim x u32 LE dims | f32 LE payload
inline constexpr std::uint8_t kXtenVersion = 0x01;
inline constexpr std::uint8_t kXtenDtypeF32 = 0x00;

std::vector<std::uint8_t> encode_xten(const Tensor& t);
/// `base_offset` is added to offsets reported in FormatError.
Tensor decode_xten(std::span<const std::uint8_t> bytes, std::uint64_t base_offset = 0);

void write_xten(const std::filesystem::path& path, const Tensor& t);
Tensor read_xten(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Ordered key=value text manifest. Keys and values are single-line.
class Manifest {
 public:
  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, std::int64_t value);
  void set(std::string key, std::uint64_t value);
  void set(std::string key, int value) { set(std::move(key), static_cast<std::int64_t>(value)); }
  void set(std::string key, std::uint32_t value) {
    set(std::move(key), static_cast<std::uint64_t>(value));
  }

  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;
  /// Throws FormatError when missing.
  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_text() const;
  /// `base_offset` positions errors within an enclosing file.
  static Manifest parse(std::string_view text, std::uint64_t base_offset = 0);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Container file: a magic tag, a length-prefixed manifest, then named XTEN
/// blobs.
///
///   magic[4] | version u8 | manifest_len u32 LE | manifest UTF-8
///   | blob_count u32 LE | { name_len u32 | name | xten_len u64 | xten bytes }*
struct Bundle {
  std::string magic;  // four ASCII characters, e.g. "XNET"
  Manifest manifest;
  std::vector<std::pair<std::string, Tensor>> blobs;

  void add(std::string name, Tensor t) { blobs.emplace_back(std::move(name), std::move(t)); }
  const Tensor& blob(std::string_view name) const;
  bool has_blob(std::string_view name) const;
};

std::vector<std::uint8_t> encode_bundle(const Bundle& b);
Bundle decode_bundle(std::span<const std::uint8_t> bytes, std::string_view expected_magic);
void write_bundle(const std::filesystem::path& path, const Bundle& b);
Bundle read_bundle(const std::filesystem::path& path, std::string_view expected_magic);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace xood
