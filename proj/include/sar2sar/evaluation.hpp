#pragma once

// Restoration metrics: PSNR on amplitude, equivalent number of looks over
// a homogeneous rectangle, and the 1-D Wasserstein distance between the
// residual speckle y / xhat and the unit-mean gamma law.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar2sar/error.hpp"
#include "sar2sar/image.hpp"
#include "sar2sar/rng.hpp"
#include "sar2sar/special_functions.hpp"
#include "sar2sar/speckle.hpp"

namespace sar2sar {

struct Region {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  long area() const { return static_cast<long>(width) * height; }

  bool inside(const Image &img) const {
    return x >= 0 && y >= 0 && width > 0 && height > 0 && x + width <= img.width() &&
           y + height <= img.height();
  }
};

struct EvalReport {
  double psnr_mean = 0.0;
  double psnr_sigma = 0.0;
  double enl = std::numeric_limits<double>::quiet_NaN();
  double wasserstein = std::numeric_limits<double>::quiet_NaN();
  int instances = 0;
};

/// Returned by psnr_amplitude when the images are identical.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) between the amplitude forms of `ref` and `est`.
/// Images already tagged amplitude are compared as-is.
inline double psnr_amplitude(const Image &ref, const Image &est, double peak) {
  require_same_shape(ref, est, "psnr");
  if (!(peak > 0.0))
    throw std::invalid_argument("psnr peak must be positive");
  const Image a = to_amplitude(ref);
  const Image b = to_amplitude(est);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  if (sse == 0.0)
    return kPsnrInfinity;
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

/// Default PSNR peak: the maximum of the reference amplitude.
inline double amplitude_peak(const Image &ref) {
  const Image a = to_amplitude(ref);
  return *std::max_element(a.values().begin(), a.values().end());
}

/// Mean and sample standard deviation of PSNR over `instances` independent
/// noisy realisations of `reflectivity`, each restored by `restore`.
/// `restore` maps an intensity image to a reflectivity/intensity estimate.
inline EvalReport psnr_protocol(const Image &reflectivity,
                                const std::function<Image(const Image &)> &restore,
                                LooksCount looks, Rng rng, int instances = 20,
                                double peak = 0.0) {
  if (instances < 1)
    throw std::invalid_argument("psnr protocol needs at least one instance");
  if (peak <= 0.0)
    peak = amplitude_peak(reflectivity);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(instances));
  for (int i = 0; i < instances; ++i) {
    Rng instance_rng = rng.derive(static_cast<std::uint64_t>(i));
    const Image noisy = corrupt(reflectivity, looks, instance_rng);
    values.push_back(psnr_amplitude(reflectivity, restore(noisy), peak));
  }
  EvalReport r;
  r.instances = instances;
  for (double v : values)
    r.psnr_mean += v;
  r.psnr_mean /= instances;
  if (instances > 1) {
    double ss = 0.0;
    for (double v : values)
      ss += (v - r.psnr_mean) * (v - r.psnr_mean);
    r.psnr_sigma = std::sqrt(ss / (instances - 1));
  }
  return r;
}

inline constexpr long kMinEnlArea = 100;

/// mean^2 / variance (unbiased) over `region`.
inline double enl(const Image &img, const Region &region) {
  if (!region.inside(img))
    throw std::out_of_range("ENL region lies outside the image");
  if (region.area() < kMinEnlArea)
    throw std::invalid_argument("ENL region must cover at least 100 pixels");
  double sum = 0.0;
  for (int y = region.y; y < region.y + region.height; ++y)
    for (int x = region.x; x < region.x + region.width; ++x)
      sum += img.at(x, y);
  const double n = static_cast<double>(region.area());
  const double mean = sum / n;
  double ss = 0.0;
  for (int y = region.y; y < region.y + region.height; ++y)
    for (int x = region.x; x < region.x + region.width; ++x)
      ss += (img.at(x, y) - mean) * (img.at(x, y) - mean);
  const double var = ss / (n - 1.0);
  if (!(var > 0.0))
    throw NumericError("ENL undefined: zero variance in region");
  return mean * mean / var;
}

/// W1 distance between the empirical law of `samples` and the unit-mean
/// gamma law with `looks` looks: mean over a grid of `grid` probability
/// levels p_i = (i + 1/2)/grid of |empirical quantile - gamma quantile|.
/// grid = 0 uses one level per sample.
inline double wasserstein_to_gamma(std::vector<double> samples, LooksCount looks,
                                   std::size_t grid = 0) {
  if (samples.empty())
    throw std::invalid_argument("wasserstein distance of an empty sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  if (grid == 0)
    grid = n;
  double sum = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
    const auto idx = std::min(n - 1, static_cast<std::size_t>(p * static_cast<double>(n)));
    sum += std::abs(samples[idx] - special::unit_gamma_quantile(looks.value(), p));
  }
  return sum / static_cast<double>(grid);
}

struct WassersteinResult {
  double distance = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

inline constexpr double kMaxExcludedFraction = 0.01;

/// Residual speckle r = y / xhat against the gamma law. Pixels with
/// non-positive xhat are excluded and counted; more than 1% excluded is an
/// error.
inline WassersteinResult wasserstein_residual(const Image &y, const Image &xhat, LooksCount looks,
                                              std::size_t grid = 0) {
  require_same_shape(y, xhat, "wasserstein_residual");
  std::vector<double> r;
  r.reserve(y.size());
  WassersteinResult out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (xhat[i] > 0.0 && std::isfinite(xhat[i]))
      r.push_back(y[i] / xhat[i]);
    else
      ++out.excluded;
  }
  if (static_cast<double>(out.excluded) > kMaxExcludedFraction * static_cast<double>(y.size()))
    throw NumericError("wasserstein_residual: " + std::to_string(out.excluded) +
                       " non-positive estimate pixels (more than 1%)");
  out.used = r.size();
  out.distance = wasserstein_to_gamma(std::move(r), looks, grid);
  return out;
}

} // namespace sar2sar
