#pragma once

// Synthetic ground truth for desk-scale experiments: textured reflectivity
// scenes (smooth multi-scale texture, piecewise-constant regions with sharp
// edges, thin linear features, bright point targets) and speckled time
// series with region-wise multiplicative changes between dates.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar2sar/image.hpp"
#include "sar2sar/rng.hpp"
#include "sar2sar/speckle.hpp"

namespace sar2sar {

struct SceneOptions {
  int width = 256;
  int height = 256;
  double log_mean = 4.0;        // mean log-reflectivity
  double texture_strength = 0.5; // std of the smooth texture (log units)
  double region_strength = 0.9;  // std of region offsets (log units)
  int min_regions = 6;
  int max_regions = 14;
  int max_lines = 3;
  int max_points = 5;
};

namespace detail {

/// Smooth value noise: bilinear-smoothstep interpolation of N(0, 1) nodes
/// spaced `cell` pixels apart.
inline std::vector<double> value_noise(int w, int h, int cell, Rng &rng) {
  const int gw = w / cell + 2, gh = h / cell + 2;
  std::vector<double> nodes(static_cast<std::size_t>(gw) * gh);
  for (auto &v : nodes)
    v = rng.normal();
  const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(gy);
    const double ty = smooth(gy - y0);
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(gx);
      const double tx = smooth(gx - x0);
      const auto node = [&](int i, int j) { return nodes[static_cast<std::size_t>(j) * gw + i]; };
      const double top = node(x0, y0) * (1 - tx) + node(x0 + 1, y0) * tx;
      const double bot = node(x0, y0 + 1) * (1 - tx) + node(x0 + 1, y0 + 1) * tx;
      out[static_cast<std::size_t>(y) * w + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

/// Rectangle or disc, uniformly placed, with side/diameter in [lo, hi].
struct Shape {
  bool disc = false;
  double cx = 0, cy = 0, rx = 0, ry = 0;

  bool contains(int x, int y) const {
    const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
    return disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
  }

  static Shape random(int w, int h, double lo, double hi, Rng &rng) {
    Shape s;
    s.disc = rng.uniform() < 0.5;
    s.cx = rng.uniform(0.0, w);
    s.cy = rng.uniform(0.0, h);
    s.rx = 0.5 * rng.uniform(lo, hi);
    s.ry = s.disc ? s.rx : 0.5 * rng.uniform(lo, hi);
    return s;
  }
};

} // namespace detail

inline Image synthetic_reflectivity(const SceneOptions &opt, Rng &rng) {
  const int w = opt.width, h = opt.height;
  if (w < 8 || h < 8)
    throw std::invalid_argument("synthetic scenes must be at least 8x8");
  std::vector<double> logr(static_cast<std::size_t>(w) * h, 0.0);

  // Multi-octave texture normalised to the requested strength.
  double amp = 1.0;
  for (int cell = std::max(8, std::min(w, h) / 4); cell >= 4; cell /= 2, amp *= 0.6) {
    const auto noise = detail::value_noise(w, h, cell, rng);
    for (std::size_t i = 0; i < logr.size(); ++i)
      logr[i] += amp * noise[i];
  }
  double mean = 0.0, sq = 0.0;
  for (double v : logr) {
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(logr.size());
  const double sd = std::sqrt(std::max(1e-12, sq / static_cast<double>(logr.size()) - mean * mean));
  for (auto &v : logr)
    v = (v - mean) / sd * opt.texture_strength;

  // Regions: half-planes give long straight boundaries, shapes give blobs.
  const int regions =
      opt.min_regions + static_cast<int>(rng.below(
                            static_cast<std::uint64_t>(opt.max_regions - opt.min_regions + 1)));
  const double lo = std::min(w, h) / 10.0, hi = std::min(w, h) / 2.5;
  for (int r = 0; r < regions; ++r) {
    const double offset = opt.region_strength * rng.normal();
    if (rng.uniform() < 0.3) {
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double nx = std::cos(theta), ny = std::sin(theta);
      const double c = rng.uniform(0.25, 0.75) * (w * std::abs(nx) + h * std::abs(ny));
      const double base = std::min(0.0, w * nx) + std::min(0.0, h * ny);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (x * nx + y * ny - base > c)
            logr[static_cast<std::size_t>(y) * w + x] += offset;
    } else {
      const auto s = detail::Shape::random(w, h, lo, hi, rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (s.contains(x, y))
            logr[static_cast<std::size_t>(y) * w + x] += offset;
    }
  }

  // Thin straight lines (roads are dark, embankments bright).
  const int lines = static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_lines + 1)));
  for (int l = 0; l < lines; ++l) {
    const double x0 = rng.uniform(0.0, w), y0 = rng.uniform(0.0, h);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double half = rng.uniform(0.5, 1.5);
    const double offset = rng.uniform() < 0.7 ? -1.5 : 1.5;
    const double nx = -std::sin(theta), ny = std::cos(theta);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (std::abs((x - x0) * nx + (y - y0) * ny) <= half)
          logr[static_cast<std::size_t>(y) * w + x] += offset;
  }

  // Bright 3x3 point targets.
  const int points = static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_points + 1)));
  for (int p = 0; p < points; ++p) {
    const int px = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - 2)));
    const int py = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h - 2)));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        logr[static_cast<std::size_t>(py + dy) * w + px + dx] += 3.0;
  }

  Image out(w, h, Domain::reflectivity);
  for (std::size_t i = 0; i < logr.size(); ++i)
    out[i] = std::exp(opt.log_mean + logr[i]);
  return out;
}

/// `count` scenes, scene i drawn from rng.derive(i).
inline std::vector<Image> synthetic_scenes(int count, const SceneOptions &opt, const Rng &rng) {
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    Rng r = rng.derive(static_cast<std::uint64_t>(i));
    out.push_back(synthetic_reflectivity(opt, r));
  }
  return out;
}

struct ChangeModel {
  bool enabled = true;
  double area_fraction = 0.1; // target changed fraction per date
  double min_log_factor = std::log(2.0);
  double max_log_factor = std::log(8.0);
  bool allow_darkening = true;
};

/// A stack of co-registered intensity images of one scene. `reflectivity`
/// and `change_masks` are simulator ground truth; training only reads
/// `dates`.
struct TimeSeries {
  std::vector<Image> dates;
  std::vector<Image> reflectivity;
  std::vector<Image> change_masks;

  int size() const { return static_cast<int>(dates.size()); }
  int width() const { return dates.front().width(); }
  int height() const { return dates.front().height(); }

  void validate() const {
    if (dates.size() < 2)
      throw std::invalid_argument("a time series needs at least two dates");
    for (const auto &d : dates) {
      require_same_shape(dates.front(), d, "time series");
      if (d.domain() != Domain::intensity)
        throw std::invalid_argument("time series dates must be intensity images");
    }
  }
};

/// Reflectivity of one date: `clean` times factors on random rectangles and
/// discs, added until the changed area reaches the target fraction.
inline Image apply_changes(const Image &clean, const ChangeModel &model, Rng &rng, Image *mask) {
  Image out = clean;
  Image m(clean.width(), clean.height(), Domain::reflectivity, 0.0);
  if (model.enabled && model.area_fraction > 0.0) {
    if (model.area_fraction >= 1.0)
      throw std::invalid_argument("change area fraction must be below 1");
    const int w = clean.width(), h = clean.height();
    const double lo = std::max(3.0, std::min(w, h) / 16.0), hi = std::max(4.0, std::min(w, h) / 6.0);
    const double target = model.area_fraction * static_cast<double>(clean.size());
    double changed = 0.0;
    while (changed < target) {
      const auto s = detail::Shape::random(w, h, lo, hi, rng);
      double lf = rng.uniform(model.min_log_factor, model.max_log_factor);
      if (model.allow_darkening && rng.uniform() < 0.5)
        lf = -lf;
      const double factor = std::exp(lf);
      const int x0 = std::max(0, static_cast<int>(s.cx - s.rx) - 1);
      const int x1 = std::min(w - 1, static_cast<int>(s.cx + s.rx) + 1);
      const int y0 = std::max(0, static_cast<int>(s.cy - s.ry) - 1);
      const int y1 = std::min(h - 1, static_cast<int>(s.cy + s.ry) + 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          if (s.contains(x, y)) {
            if (m.at(x, y) == 0.0)
              changed += 1.0;
            m.at(x, y) = 1.0;
            out.at(x, y) = clean.at(x, y) * factor;
          }
    }
  }
  if (mask)
    *mask = std::move(m);
  return out;
}

/// Each date gets independent changes and an independent speckle draw.
inline TimeSeries simulate_time_series(const Image &clean, int dates, LooksCount looks,
                                       const ChangeModel &model,
                                       const std::optional<CorrelationKernel> &kernel,
                                       const Rng &rng) {
  if (dates < 2)
    throw std::invalid_argument("a time series needs at least two dates");
  if (clean.domain() != Domain::reflectivity)
    throw std::invalid_argument("simulate_time_series expects a reflectivity image");
  TimeSeries ts;
  for (int t = 0; t < dates; ++t) {
    Rng change_rng = rng.derive("change").derive(static_cast<std::uint64_t>(t));
    Rng speckle_rng = rng.derive("speckle").derive(static_cast<std::uint64_t>(t));
    Image mask;
    ts.reflectivity.push_back(apply_changes(clean, model, change_rng, &mask));
    ts.change_masks.push_back(std::move(mask));
    ts.dates.push_back(corrupt(ts.reflectivity.back(), looks, speckle_rng, kernel));
  }
  return ts;
}

} // namespace sar2sar
