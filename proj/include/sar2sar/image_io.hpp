#pragma once

// S2S1 image files:
//
//   offset  size  field
//   0       4     magic "S2S1"
//   4       2     version (1)
//   6       1     domain tag (0 reflectivity, 1 intensity, 2 amplitude,
//                 3 log-intensity)
//   7       1     dtype (0 = float32)
//   8       4     width
//   12      4     height
//   16      4*w*h payload, row-major
//
// All integers and floats are little-endian. Pixel values are narrowed to
// float32 on write, so write(read(file)) reproduces the file bit for bit.
//
// PGM export is a lossy 8-bit preview for humans and is never read back.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sar2sar/binary_io.hpp"
#include "sar2sar/image.hpp"

namespace sar2sar {

inline constexpr char kImageMagic[4] = {'S', '2', 'S', '1'};
inline constexpr std::uint16_t kImageVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;

inline std::vector<char> encode_image(const Image &img) {
  ByteWriter w;
  w.bytes({kImageMagic, 4});
  w.u16(kImageVersion);
  w.u8(static_cast<std::uint8_t>(img.domain()));
  w.u8(kDtypeFloat32);
  w.u32(static_cast<std::uint32_t>(img.width()));
  w.u32(static_cast<std::uint32_t>(img.height()));
  for (double v : img.values())
    w.f32(static_cast<float>(v));
  return w.take();
}

inline Image decode_image(const std::vector<char> &bytes, const std::string &what = "image") {
  ByteReader r(bytes, what);
  if (r.bytes(4) != std::string_view(kImageMagic, 4))
    r.fail("bad magic (expected S2S1)");
  const auto version = r.u16();
  if (version != kImageVersion)
    r.fail("unsupported version " + std::to_string(version));
  const auto domain = r.u8();
  if (domain > 3)
    r.fail("domain tag " + std::to_string(domain) + " out of range");
  const auto dtype = r.u8();
  if (dtype != kDtypeFloat32)
    r.fail("unsupported dtype " + std::to_string(dtype));
  const std::uint32_t width = r.u32();
  const std::uint32_t height = r.u32();
  if (width == 0 || height == 0 || width > (1u << 20) || height > (1u << 20))
    r.fail("implausible size " + std::to_string(width) + "x" + std::to_string(height));
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (r.remaining() != 4 * n)
    r.fail("payload is " + std::to_string(r.remaining()) + " bytes, expected " +
           std::to_string(4 * n));
  std::vector<double> values(n);
  for (auto &v : values)
    v = r.f32();
  return Image(static_cast<int>(width), static_cast<int>(height), static_cast<Domain>(domain),
               std::move(values));
}

inline void write_image(const std::filesystem::path &path, const Image &img) {
  write_file(path, encode_image(img));
}

inline Image read_image(const std::filesystem::path &path) {
  return decode_image(read_file(path), path.string());
}

/// 8-bit binary PGM of the amplitude of `img`, linearly scaled so that 0
/// maps to black and mean + 3 standard deviations (clipped) to white.
inline std::vector<char> encode_pgm_preview(const Image &img) {
  const Image a = to_amplitude(img);
  double mean = 0.0, sq = 0.0;
  for (double v : a.values()) {
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(a.size());
  const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(a.size()) - mean * mean));
  const double white = mean + 3.0 * sd > 0.0 ? mean + 3.0 * sd : 1.0;
  ByteWriter w;
  w.bytes("P5\n" + std::to_string(a.width()) + " " + std::to_string(a.height()) + "\n255\n");
  for (double v : a.values())
    w.u8(static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * v / white), 0l, 255l)));
  return w.take();
}

inline void write_pgm_preview(const std::filesystem::path &path, const Image &img) {
  write_file(path, encode_pgm_preview(img));
}

} // namespace sar2sar
