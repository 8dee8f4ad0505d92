#pragma once

// Little-endian binary encode/decode used by every on-disk format.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "gsfl/common.hpp"

namespace gsfl::binio {

class Writer {
 public:
  void bytes(std::span<const unsigned char> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(const char (&m)[5]) {
    bytes({reinterpret_cast<const unsigned char*>(m), 4});
  }
  void u8(std::uint8_t v) { put(v, 1); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
  }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }

  const std::vector<unsigned char>& buffer() const noexcept { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> buf_;
};

// Bounds-checked reader; every failure is a kFormat error naming the offset.
class Reader {
 public:
  Reader(std::span<const unsigned char> data, std::string source)
      : data_(data), source_(std::move(source)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void expect_magic(const char (&m)[5]) {
    need(4, "magic");
    if (std::memcmp(data_.data() + pos_, m, 4) != 0) {
      error_at(pos_, std::string("bad magic, expected \"") + m + "\"");
    }
    pos_ += 4;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1, "u8")); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
  std::uint64_t u64() { return get(8, "u64"); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void f64s(std::span<double> out) {
    need(out.size() * 8, "float64 block");
    for (double& x : out) x = f64();
  }
  void expect_end() {
    if (pos_ != data_.size()) error_at(pos_, "trailing bytes after payload");
  }

  [[noreturn]] void error_at(std::size_t offset, const std::string& what) const {
    fail(ErrorKind::kFormat,
         source_ + ": " + what + " at byte offset " + std::to_string(offset));
  }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      error_at(pos_, std::string("truncated ") + what);
    }
  }

 private:
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const unsigned char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);

// Writes via a temporary sibling and renames, so a failed write never leaves a
// partial file at `path`.
void write_file_atomic(const std::string& path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace gsfl::binio
