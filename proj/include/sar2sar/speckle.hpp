#pragma once

// Fully developed speckle: multiplicative gamma model in intensity, the
// additive Fisher-Tippett model in log-intensity, and the moments of the
// log-speckle used for debiasing.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar2sar/error.hpp"
#include "sar2sar/image.hpp"
#include "sar2sar/rng.hpp"
#include "sar2sar/special_functions.hpp"

namespace sar2sar {

/// Number of looks L >= 1.
class LooksCount {
public:
  explicit LooksCount(double looks) : value_(looks) {
    if (!std::isfinite(looks) || looks < 1.0)
      throw std::invalid_argument("number of looks must be finite and >= 1, got " +
                                  std::to_string(looks));
  }

  double value() const { return value_; }
  bool is_integer() const { return value_ == std::floor(value_); }

  friend bool operator==(LooksCount, LooksCount) = default;

private:
  double value_;
};

/// Small real kernel that spatially correlates the complex field before
/// detection. Centred on (width/2, height/2).
struct CorrelationKernel {
  int width = 1;
  int height = 1;
  std::vector<double> weights{1.0};

  double at(int x, int y) const { return weights[static_cast<std::size_t>(y) * width + x]; }

  double energy() const {
    double e = 0.0;
    for (double w : weights)
      e += w * w;
    return e;
  }

  /// Separable Gaussian of standard deviation `sigma` truncated at `radius`.
  static CorrelationKernel gaussian(double sigma, int radius) {
    if (!(sigma > 0.0) || radius < 0)
      throw std::invalid_argument("gaussian kernel needs sigma > 0 and radius >= 0");
    CorrelationKernel k;
    k.width = k.height = 2 * radius + 1;
    k.weights.assign(static_cast<std::size_t>(k.width) * k.height, 0.0);
    for (int y = -radius; y <= radius; ++y)
      for (int x = -radius; x <= radius; ++x)
        k.weights[static_cast<std::size_t>(y + radius) * k.width + (x + radius)] =
            std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
    return k;
  }

  static CorrelationKernel box(int size) {
    if (size < 1)
      throw std::invalid_argument("box kernel size must be >= 1");
    CorrelationKernel k;
    k.width = k.height = size;
    k.weights.assign(static_cast<std::size_t>(size) * size, 1.0);
    return k;
  }
};

/// Realisation of the speckle S (unit mean, variance 1/L per pixel).
struct SpeckleField {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  LooksCount looks{1.0};
  std::optional<CorrelationKernel> kernel;
};

namespace detail {

// Gamma(shape, scale 1/shape) variate: unit mean.
inline double unit_gamma_variate(double shape, bool integer_shape, Rng &rng) {
  if (integer_shape) {
    const int n = static_cast<int>(shape);
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
      sum -= std::log(rng.uniform());
    return sum / shape;
  }
  // Marsaglia-Tsang squeeze/rejection, valid for shape >= 1.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0)
      continue;
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
      return d * v / shape;
  }
}

// One look of correlated speckle: |k * g|^2 / sum(k^2) with g an i.i.d.
// circular complex Gaussian field of unit power; circular boundaries keep
// the field stationary.
inline void add_correlated_look(const CorrelationKernel &k, int width, int height, Rng &rng,
                                std::vector<double> &acc) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<double> re(n), im(n);
  const double s = std::sqrt(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = s * rng.normal();
    im[i] = s * rng.normal();
  }
  const double norm = 1.0 / k.energy();
  const int cx = k.width / 2;
  const int cy = k.height / 2;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double ar = 0.0, ai = 0.0;
      for (int j = 0; j < k.height; ++j) {
        const int sy = ((y + j - cy) % height + height) % height;
        for (int i = 0; i < k.width; ++i) {
          const int sx = ((x + i - cx) % width + width) % width;
          const double w = k.at(i, j);
          const std::size_t idx = static_cast<std::size_t>(sy) * width + sx;
          ar += w * re[idx];
          ai += w * im[idx];
        }
      }
      acc[static_cast<std::size_t>(y) * width + x] += (ar * ar + ai * ai) * norm;
    }
  }
}

} // namespace detail

/// Draws a speckle field. Without a kernel, pixels are i.i.d. unit-mean
/// gamma(L); integer L sums L exponentials, other L uses rejection sampling.
/// With a kernel, each of the L looks is a detected, kernel-filtered complex
/// Gaussian field and the looks are averaged, so L must be an integer.
inline SpeckleField sample_speckle(int width, int height, LooksCount looks, Rng &rng,
                                   const std::optional<CorrelationKernel> &kernel = std::nullopt) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("speckle field dimensions must be positive");
  SpeckleField field{width, height, {}, looks, kernel};
  const std::size_t n = static_cast<std::size_t>(width) * height;
  field.values.assign(n, 0.0);

  if (!kernel) {
    const bool integer = looks.is_integer();
    for (auto &v : field.values)
      v = detail::unit_gamma_variate(looks.value(), integer, rng);
    return field;
  }

  if (kernel->width > width || kernel->height > height)
    throw std::invalid_argument("correlation kernel larger than the image");
  if (kernel->width < 1 || kernel->height < 1 ||
      kernel->weights.size() != static_cast<std::size_t>(kernel->width) * kernel->height ||
      !(kernel->energy() > 0.0))
    throw std::invalid_argument("correlation kernel is malformed or all-zero");
  if (!looks.is_integer())
    throw std::invalid_argument("correlated speckle requires an integer number of looks");
  const int n_looks = static_cast<int>(looks.value());
  for (int l = 0; l < n_looks; ++l)
    detail::add_correlated_look(*kernel, width, height, rng, field.values);
  for (auto &v : field.values) {
    v /= n_looks;
    // A detected complex Gaussian can be exactly zero only with probability
    // zero, but guard the positivity invariant against underflow.
    if (v <= 0.0)
      v = std::numeric_limits<double>::min();
  }
  return field;
}

/// Y = X * S with a fresh speckle draw.
inline Image corrupt(const Image &reflectivity, LooksCount looks, Rng &rng,
                     const std::optional<CorrelationKernel> &kernel = std::nullopt) {
  if (reflectivity.domain() != Domain::reflectivity)
    throw std::invalid_argument("corrupt expects a reflectivity image, got " +
                                std::string(to_string(reflectivity.domain())));
  for (double v : reflectivity.values())
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("reflectivity must be finite and non-negative");
  const SpeckleField s =
      sample_speckle(reflectivity.width(), reflectivity.height(), looks, rng, kernel);
  Image y(reflectivity.width(), reflectivity.height(), Domain::intensity);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = reflectivity[i] * s.values[i];
  return y;
}

inline constexpr double kDefaultLogFloor = 1e-10;

/// Natural log of max(y, floor) pixelwise.
inline Image log_transform(const Image &intensity, double floor = kDefaultLogFloor) {
  if (!(floor > 0.0))
    throw std::invalid_argument("log floor must be positive");
  if (intensity.domain() == Domain::log_intensity)
    throw std::invalid_argument("image is already in the log domain");
  return map_image(intensity, Domain::log_intensity,
                   [floor](double v) { return std::log(std::max(v, floor)); });
}

/// Inverse of log_transform: exp pixelwise into `domain`.
inline Image exp_transform(const Image &log_img, Domain domain = Domain::intensity) {
  return map_image(log_img, domain, [](double v) { return std::exp(v); });
}

/// log p(s) for log-speckle s: L log L - log Gamma(L) + L s - L e^s.
inline double fisher_tippett_logpdf(double log_speckle, LooksCount looks) {
  if (!std::isfinite(log_speckle))
    throw std::invalid_argument("fisher_tippett_logpdf: argument must be finite");
  const double L = looks.value();
  return L * std::log(L) - std::lgamma(L) + L * log_speckle - L * std::exp(log_speckle);
}

/// E[log S] = psi(L) - log L.
inline double log_speckle_bias(LooksCount looks) {
  return special::digamma_minus_log(looks.value());
}

/// Var[log S] = psi(1, L).
inline double log_speckle_var(LooksCount looks) { return special::trigamma(looks.value()); }

} // namespace sar2sar
