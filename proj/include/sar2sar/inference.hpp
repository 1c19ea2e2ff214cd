#pragma once

// Restoration of whole images with a trained network: padding to the
// network's size constraints, overlapping-tile inference with cosine-ramp
// blending, subsampled pre-estimates and change compensation.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sar2sar/error.hpp"
#include "sar2sar/image.hpp"
#include "sar2sar/network.hpp"
#include "sar2sar/speckle.hpp"
#include "sar2sar/tensor.hpp"

namespace sar2sar {

/// Mirror index into [0, n) without repeating the edge pixel, for any
/// offset (repeated bounces for pads wider than the image).
inline int mirror_index(int i, int n) {
  if (n == 1)
    return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0)
    i += period;
  return i < n ? i : period - i;
}

/// Extends `img` to the right and bottom by mirroring up to (w, h).
inline Image mirror_pad(const Image &img, int w, int h) {
  if (w < img.width() || h < img.height())
    throw std::invalid_argument("mirror_pad cannot shrink an image");
  Image out(w, h, img.domain());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = img.at(mirror_index(x, img.width()), mirror_index(y, img.height()));
  return out;
}

namespace detail {

inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

inline Image forward_image(const NetworkParams<float> &params, const Image &log_img) {
  const Image single[] = {log_img};
  const Tensor<float> out = forward(params, stack_images<float>(single));
  if (!out.all_finite())
    throw NumericError("network produced non-finite output (untrained or corrupt checkpoint?)");
  return unstack_image(out, 0, Domain::log_intensity);
}

} // namespace detail

/// Smallest admissible padded size for an image dimension.
inline int padded_extent(const NetworkConfig &cfg, int n) {
  return std::max(detail::round_up(n, cfg.size_divisor()), cfg.min_size());
}

/// Runs the network on a whole log-intensity image, mirror-padding it to
/// the network's size constraints and cropping the result back.
inline Image infer_log(const NetworkParams<float> &params, const Image &log_img) {
  if (log_img.domain() != Domain::log_intensity)
    throw std::invalid_argument("infer_log expects a log-intensity image");
  const auto &cfg = params.config();
  const int pw = padded_extent(cfg, log_img.width()), ph = padded_extent(cfg, log_img.height());
  if (pw == log_img.width() && ph == log_img.height())
    return detail::forward_image(params, log_img);
  return detail::forward_image(params, mirror_pad(log_img, pw, ph))
      .crop(0, 0, log_img.width(), log_img.height());
}

struct TileOptions {
  int tile = 256; // tile edge in pixels, rounded up to the size divisor
  int ramp = 8;   // width of the cosine blending ramp
};

/// Pixels next to an interior tile edge that get zero blending weight:
/// the receptive radius plus one pooling cell, so every weighted output
/// pixel sees the same context as in the untiled pass.
inline int tile_margin(const NetworkConfig &cfg) {
  return cfg.receptive_radius() + cfg.size_divisor();
}

namespace detail {

/// Tile origins along one axis: multiples of `align`, consecutive tiles
/// overlapping by at least `overlap`, last tile flush with the end.
inline std::vector<int> tile_origins(int n, int tile, int overlap, int align) {
  std::vector<int> o{0};
  if (tile >= n)
    return o;
  const int step = std::max(align, (tile - overlap) / align * align);
  while (o.back() + tile < n) {
    const int next = std::min(o.back() + step, n - tile);
    o.push_back(next);
  }
  return o;
}

/// Weight of local coordinate u in a tile of size `tile`; edges flagged as
/// interior fade to zero inside `margin`.
inline double ramp_weight(int u, int tile, bool interior_lo, bool interior_hi, int margin,
                          int ramp) {
  const auto fade = [&](int d) {
    if (d < margin)
      return 0.0;
    if (d >= margin + ramp)
      return 1.0;
    const double s = std::sin(0.5 * std::numbers::pi * (d - margin + 0.5) / ramp);
    return s * s;
  };
  double wgt = 1.0;
  if (interior_lo)
    wgt = std::min(wgt, fade(u));
  if (interior_hi)
    wgt = std::min(wgt, fade(tile - 1 - u));
  return wgt;
}

} // namespace detail

/// Tiled version of infer_log for images too large for one pass. The
/// image is mirror-padded once, cut into aligned overlapping tiles, and the
/// tile outputs are blended with weights that vanish near interior tile
/// edges. Images that fit in one tile take the untiled path.
inline Image infer_log_tiled(const NetworkParams<float> &params, const Image &log_img,
                             const TileOptions &opt = {}) {
  if (log_img.domain() != Domain::log_intensity)
    throw std::invalid_argument("infer_log_tiled expects a log-intensity image");
  const auto &cfg = params.config();
  const int align = cfg.size_divisor();
  const int margin = tile_margin(cfg);
  const int ramp = std::max(1, opt.ramp);
  const int overlap = detail::round_up(2 * margin + ramp, align);
  const int tile = std::max(detail::round_up(opt.tile, align), overlap + align);
  const int pw = padded_extent(cfg, log_img.width()), ph = padded_extent(cfg, log_img.height());
  if (pw <= tile && ph <= tile)
    return infer_log(params, log_img);

  const Image padded = mirror_pad(log_img, pw, ph);
  const auto xs = detail::tile_origins(pw, tile, overlap, align);
  const auto ys = detail::tile_origins(ph, tile, overlap, align);
  std::vector<double> acc(padded.size(), 0.0), wsum(padded.size(), 0.0);
  for (std::size_t j = 0; j < ys.size(); ++j)
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const int tw = std::min(tile, pw), th = std::min(tile, ph);
      const Image out = detail::forward_image(params, padded.crop(xs[i], ys[j], tw, th));
      for (int v = 0; v < th; ++v) {
        const double wy = detail::ramp_weight(v, th, j > 0, j + 1 < ys.size(), margin, ramp);
        if (wy == 0.0)
          continue;
        for (int u = 0; u < tw; ++u) {
          const double wgt =
              wy * detail::ramp_weight(u, tw, i > 0, i + 1 < xs.size(), margin, ramp);
          const std::size_t k = static_cast<std::size_t>(ys[j] + v) * pw + xs[i] + u;
          acc[k] += wgt * out.at(u, v);
          wsum[k] += wgt;
        }
      }
    }
  Image out(log_img.width(), log_img.height(), Domain::log_intensity);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * pw + x;
      if (!(wsum[k] > 0.0))
        throw std::logic_error("tile layout left a pixel uncovered");
      out.at(x, y) = acc[k] / wsum[k];
    }
  return out;
}

/// Reflectivity estimate exp(net(log y)) of an intensity image.
inline Image despeckle(const NetworkParams<float> &params, const Image &intensity,
                       const TileOptions &opt = {}) {
  if (intensity.domain() != Domain::intensity)
    throw std::invalid_argument("despeckle expects an intensity image, got " +
                                std::string(to_string(intensity.domain())));
  return exp_transform(infer_log_tiled(params, log_transform(intensity), opt),
                       Domain::reflectivity);
}

/// Bilinear interpolation of `small` (sampled every `factor` pixels from
/// a w x h grid) back onto that grid. Positions past the last sample are
/// held constant.
inline Image upsample_bilinear(const Image &small, int factor, int w, int h) {
  if (small.width() != (w + factor - 1) / factor || small.height() != (h + factor - 1) / factor)
    throw ShapeError("upsample_bilinear: subsampled grid does not match the target size");
  Image out(w, h, small.domain());
  for (int y = 0; y < h; ++y) {
    const int y0 = y / factor, y1 = std::min(y0 + 1, small.height() - 1);
    const double fy = static_cast<double>(y % factor) / factor;
    for (int x = 0; x < w; ++x) {
      const int x0 = x / factor, x1 = std::min(x0 + 1, small.width() - 1);
      const double fx = static_cast<double>(x % factor) / factor;
      const double top = small.at(x0, y0) * (1.0 - fx) + small.at(x1, y0) * fx;
      const double bot = small.at(x0, y1) * (1.0 - fx) + small.at(x1, y1) * fx;
      out.at(x, y) = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

/// Log-reflectivity pre-estimate from a subsampled copy of `intensity`:
/// every factor-th pixel in both axes, restored, then bilinearly
/// upsampled to the original grid. Factor 1 is plain inference.
inline Image pre_estimate(const NetworkParams<float> &params, const Image &intensity, int factor,
                          const TileOptions &opt = {}) {
  if (factor < 1)
    throw std::invalid_argument("subsample factor must be >= 1");
  if (factor > std::min(intensity.width(), intensity.height()))
    throw std::invalid_argument("subsample factor " + std::to_string(factor) +
                                " larger than the image");
  const Image logy = log_transform(intensity);
  if (factor == 1)
    return infer_log_tiled(params, logy, opt);
  const int sw = (intensity.width() + factor - 1) / factor;
  const int sh = (intensity.height() + factor - 1) / factor;
  Image small(sw, sh, Domain::log_intensity);
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x)
      small.at(x, y) = logy.at(x * factor, y * factor);
  return upsample_bilinear(infer_log_tiled(params, small, opt), factor, intensity.width(),
                           intensity.height());
}

/// y2 - xhat2 + xhat1: the second date with its estimated changes relative
/// to the first date removed.
inline Image compensate_change(const Image &y2, const Image &xhat1, const Image &xhat2) {
  require_same_shape(y2, xhat1, "compensate_change");
  require_same_shape(y2, xhat2, "compensate_change");
  for (const Image *img : {&y2, &xhat1, &xhat2})
    if (img->domain() != Domain::log_intensity)
      throw std::invalid_argument("compensate_change works on log-intensity images");
  Image out(y2.width(), y2.height(), Domain::log_intensity);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = y2[i] + (xhat1[i] - xhat2[i]);
  return out;
}

} // namespace sar2sar
