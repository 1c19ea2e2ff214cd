#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sar2sar/error.hpp"

namespace sar2sar {

/// What the pixel values of an image represent. The numeric tags are the
/// ones stored in image files.
enum class Domain : std::uint8_t {
  reflectivity = 0,
  intensity = 1,
  amplitude = 2,
  log_intensity = 3,
};

inline std::string_view to_string(Domain d) {
  switch (d) {
  case Domain::reflectivity:
    return "reflectivity";
  case Domain::intensity:
    return "intensity";
  case Domain::amplitude:
    return "amplitude";
  case Domain::log_intensity:
    return "log_intensity";
  }
  return "unknown";
}

/// Single-channel row-major image with a domain tag.
class Image {
public:
  Image() = default;

  Image(int width, int height, Domain domain, double fill = 0.0)
      : width_(width), height_(height), domain_(domain) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("image dimensions must be positive");
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  Image(int width, int height, Domain domain, std::vector<double> values)
      : width_(width), height_(height), domain_(domain), values_(std::move(values)) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("image dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(width) * height)
      throw ShapeError("image value count does not match width*height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Domain domain() const { return domain_; }
  void set_domain(Domain d) { domain_ = d; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double &at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double &operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double> &data() { return values_; }
  const std::vector<double> &data() const { return values_; }

  bool same_shape(const Image &o) const { return width_ == o.width_ && height_ == o.height_; }

  /// Checks the per-domain invariants: finite values, and non-negative
  /// values outside the log domain.
  bool valid() const {
    const bool nonneg = domain_ != Domain::log_intensity;
    return std::all_of(values_.begin(), values_.end(), [&](double v) {
      return std::isfinite(v) && (!nonneg || v >= 0.0);
    });
  }

  /// Copy of the rectangle [x0, x0+w) x [y0, y0+h).
  Image crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width_ || y0 + h > height_)
      throw std::out_of_range("crop rectangle outside image");
    Image out(w, h, domain_);
    for (int y = 0; y < h; ++y)
      std::copy_n(&values_[static_cast<std::size_t>(y0 + y) * width_ + x0], w,
                  &out.values_[static_cast<std::size_t>(y) * w]);
    return out;
  }

  friend bool operator==(const Image &, const Image &) = default;

private:
  int width_ = 0;
  int height_ = 0;
  Domain domain_ = Domain::intensity;
  std::vector<double> values_;
};

inline void require_same_shape(const Image &a, const Image &b, std::string_view what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
}

/// Pixelwise map into a new image tagged `domain`.
template <class F> Image map_image(const Image &in, Domain domain, F &&f) {
  Image out(in.width(), in.height(), domain);
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = f(in[i]);
  return out;
}

/// Intensity or reflectivity to amplitude (square root). Log-intensity images
/// are exponentiated first.
inline Image to_amplitude(const Image &img) {
  switch (img.domain()) {
  case Domain::amplitude:
    return img;
  case Domain::log_intensity:
    return map_image(img, Domain::amplitude, [](double v) { return std::exp(0.5 * v); });
  default:
    return map_image(img, Domain::amplitude, [](double v) { return std::sqrt(v); });
  }
}

} // namespace sar2sar
