#pragma once

// Little-endian byte buffers for the on-disk formats, independent of host
// byte order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "sar2sar/error.hpp"
#include "sar2sar/rng.hpp"

namespace sar2sar {

class ByteWriter {
public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { little(v, 2); }
  void u32(std::uint32_t v) { little(v, 4); }
  void f32(float v) { little(std::bit_cast<std::uint32_t>(v), 4); }

  const std::vector<char> &buffer() const { return buf_; }
  std::vector<char> take() { return std::move(buf_); }

private:
  void little(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }

  std::vector<char> buf_;
};

class ByteReader {
public:
  ByteReader(const std::vector<char> &buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(little(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(little(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little(4)); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::size_t remaining() const { return buf_.size() - pos_; }

  [[noreturn]] void fail(const std::string &msg) const {
    throw FormatError(what_ + ": " + msg);
  }

private:
  void need(std::size_t n) const {
    if (remaining() < n)
      fail("truncated (needed " + std::to_string(n) + " more bytes at offset " +
           std::to_string(pos_) + ")");
  }

  std::uint64_t little(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<char> &buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path &path, const std::vector<char> &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw std::runtime_error("failed writing " + path.string());
}

/// 64-bit FNV-1a digest rendered as 16 hex digits.
inline std::string hex_digest(std::string_view bytes) {
  std::uint64_t h = Rng::fnv1a(bytes);
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4)
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

inline std::string hex_digest(const std::vector<char> &bytes) {
  return hex_digest(std::string_view(bytes.data(), bytes.size()));
}

} // namespace sar2sar
