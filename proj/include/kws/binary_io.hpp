#pragma once

// Little-endian byte encoding shared by the KWSF / KWSM / KWSP containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kws/error.hpp"

namespace kws::io {

class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(std::string_view m) {
    buf_.insert(buf_.end(), m.begin(), m.end());
  }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> release() { return std::move(buf_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked cursor; every failure raises FormatError with the offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return data_.size() - pos_; }

  void expect_magic(std::string_view m, std::string_view what) {
    need(m.size(), what);
    if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0)
      throw FormatError("bad magic for " + std::string(what) + ", expected \"" +
                            std::string(m) + "\"",
                        pos_);
    pos_ += m.size();
  }
  std::uint16_t u16(std::string_view what = "u16") { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(std::string_view what = "u32") { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(std::string_view what = "u64") { return le(8, what); }
  float f32(std::string_view what = "f32") { return std::bit_cast<float>(u32(what)); }
  double f64(std::string_view what = "f64") { return std::bit_cast<double>(u64(what)); }
  std::string str(std::string_view what = "string") {
    const auto n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string chars(std::size_t n, std::string_view what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void skip(std::uint64_t n, std::string_view what) {
    need(n, what);
    pos_ += n;
  }
  // Throws unless at least n more bytes are available.
  void need(std::uint64_t n, std::string_view what) const {
    if (remaining() < n)
      throw FormatError("truncated " + std::string(what) + ": need " + std::to_string(n) +
                            " bytes, have " + std::to_string(remaining()),
                        pos_);
  }

 private:
  std::uint64_t le(int n, std::string_view what) {
    need(static_cast<std::uint64_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::uint64_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
// Raw 32-byte digest.
std::vector<std::uint8_t> sha256(std::span<const std::uint8_t> bytes);

}  // namespace kws::io
