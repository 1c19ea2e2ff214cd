#pragma once

// Compact U-Net denoiser for log-intensity images with residual wiring:
//
//   despeckled = input - unet(input)
//
// Encoder level l: two (conv, leaky ReLU) blocks, output kept as skip l,
// then 2x2 max-pool. One bottleneck (conv, leaky ReLU). Decoder level l:
// nearest-neighbour 2x upsample, concatenate [upsampled, skip l], two
// (conv, leaky ReLU) blocks. A final linear conv maps to one channel.
// Convolutions use reflection padding so spatial size is preserved.
//
// Reverse-mode differentiation is written out by hand in backward(); the
// dense products inside each convolution (im2col form) go through Eigen.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sar2sar/error.hpp"
#include "sar2sar/rng.hpp"
#include "sar2sar/tensor.hpp"

namespace sar2sar {

struct NetworkConfig {
  int depth = 2;
  std::vector<int> channels{16, 32};
  int kernel_size = 3;
  double leaky_slope = 0.1;

  void validate() const {
    if (depth < 1)
      throw std::invalid_argument("network depth must be >= 1");
    if (static_cast<int>(channels.size()) != depth)
      throw std::invalid_argument("network needs one channel count per level (" +
                                  std::to_string(depth) + " levels, " +
                                  std::to_string(channels.size()) + " counts)");
    for (int c : channels)
      if (c < 1)
        throw std::invalid_argument("channel counts must be positive");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw std::invalid_argument("kernel size must be odd and positive");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
      throw std::invalid_argument("leaky slope must lie in [0, 1)");
  }

  /// Spatial sizes fed to forward() must be multiples of this.
  int size_divisor() const { return 1 << depth; }

  /// Smallest admissible spatial size: the deepest level needs at least
  /// kernel_size/2 + 1 pixels for reflection padding.
  int min_size() const { return size_divisor() * std::max(1, kernel_size / 2 + 1); }

  /// Upper bound on how far (in pixels) the output at a pixel can depend on
  /// the input. Pooling and upsampling are counted conservatively.
  int receptive_radius() const {
    const int pad = kernel_size / 2;
    int r = 0;
    int scale = 1;
    for (int l = 0; l < depth; ++l) {
      r += 2 * pad * scale; // two convs
      r += scale;           // 2x2 pool
      scale *= 2;
    }
    r += pad * scale; // bottleneck
    for (int l = depth - 1; l >= 0; --l) {
      scale /= 2;
      r += 2 * pad * scale;
    }
    return r + pad; // output conv
  }

  friend bool operator==(const NetworkConfig &, const NetworkConfig &) = default;
};

template <class T> struct ConvLayer {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  Buffer<T> weight; // [out][in][ky][kx]
  Buffer<T> bias;   // [out]

  std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

/// Weights of every convolution, in a fixed layer order:
///   enc{l}.conv0, enc{l}.conv1 for l = 0..depth-1,
///   bottleneck.conv0,
///   dec{l}.conv0, dec{l}.conv1 for l = depth-1..0,
///   out.conv
template <class T> class NetworkParams {
public:
  NetworkParams() = default;

  /// All-zero parameters (identity restoration under residual wiring).
  explicit NetworkParams(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    const int d = config_.depth;
    const auto &c = config_.channels;
    const int k = config_.kernel_size;
    for (int l = 0; l < d; ++l) {
      add_layer("enc" + std::to_string(l) + ".conv0", l == 0 ? 1 : c[l - 1], c[l], k);
      add_layer("enc" + std::to_string(l) + ".conv1", c[l], c[l], k);
    }
    add_layer("bottleneck.conv0", c[d - 1], c[d - 1], k);
    for (int l = d - 1; l >= 0; --l) {
      const int below = (l == d - 1) ? c[d - 1] : c[l + 1];
      add_layer("dec" + std::to_string(l) + ".conv0", below + c[l], c[l], k);
      add_layer("dec" + std::to_string(l) + ".conv1", c[l], c[l], k);
    }
    add_layer("out.conv", c[0], 1, k);
  }

  /// He (fan-in) initialisation adjusted for the leaky slope; zero biases;
  /// the output layer is left at zero so training starts from the identity.
  static NetworkParams initialized(const NetworkConfig &config, Rng &rng) {
    NetworkParams p(config);
    const double a = config.leaky_slope;
    for (std::size_t i = 0; i + 1 < p.layers_.size(); ++i) {
      auto &layer = p.layers_[i];
      const double stddev = std::sqrt(2.0 / ((1.0 + a * a) * static_cast<double>(layer.fan_in())));
      for (auto &w : layer.weight)
        w = static_cast<T>(stddev * rng.normal());
    }
    return p;
  }

  const NetworkConfig &config() const { return config_; }
  std::vector<ConvLayer<T>> &layers() { return layers_; }
  const std::vector<ConvLayer<T>> &layers() const { return layers_; }
  ConvLayer<T> &layer(std::size_t i) { return layers_[i]; }
  const ConvLayer<T> &layer(std::size_t i) const { return layers_[i]; }

  const ConvLayer<T> *find(std::string_view name) const {
    for (const auto &l : layers_)
      if (l.name == name)
        return &l;
    return nullptr;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto &l : layers_)
      n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Bumped on every in-place update; forward caches record it.
  std::uint64_t revision() const { return revision_; }
  void touch() { ++revision_; }

  /// Phase history, oldest first, e.g. {"A:<id>", "B:<id>"}.
  std::vector<std::string> &provenance() { return provenance_; }
  const std::vector<std::string> &provenance() const { return provenance_; }

  bool all_finite() const {
    for (const auto &l : layers_) {
      for (const T &v : l.weight)
        if (!std::isfinite(v))
          return false;
      for (const T &v : l.bias)
        if (!std::isfinite(v))
          return false;
    }
    return true;
  }

  void fill(T value) {
    for (auto &l : layers_) {
      std::fill(l.weight.begin(), l.weight.end(), value);
      std::fill(l.bias.begin(), l.bias.end(), value);
    }
  }

  /// Zero-valued parameter set with the same layout (gradient buffer).
  NetworkParams zeros_like() const {
    NetworkParams z(config_);
    return z;
  }

  template <class U> NetworkParams<U> cast() const {
    NetworkParams<U> out(config_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto &dst = out.layers()[i];
      const auto &src = layers_[i];
      for (std::size_t k = 0; k < src.weight.size(); ++k)
        dst.weight[k] = static_cast<U>(src.weight[k]);
      for (std::size_t k = 0; k < src.bias.size(); ++k)
        dst.bias[k] = static_cast<U>(src.bias[k]);
    }
    out.provenance() = provenance_;
    return out;
  }

  /// Index helpers matching the layer order above.
  std::size_t enc_index(int level, int conv) const { return 2 * level + conv; }
  std::size_t bottleneck_index() const { return 2 * config_.depth; }
  std::size_t dec_index(int level, int conv) const {
    return 2 * config_.depth + 1 + 2 * (config_.depth - 1 - level) + conv;
  }
  std::size_t out_index() const { return 4 * config_.depth + 1; }

private:
  void add_layer(std::string name, int cin, int cout, int k) {
    ConvLayer<T> l;
    l.name = std::move(name);
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.weight.assign(static_cast<std::size_t>(cout) * cin * k * k, T(0));
    l.bias.assign(static_cast<std::size_t>(cout), T(0));
    layers_.push_back(std::move(l));
  }

  NetworkConfig config_;
  std::vector<ConvLayer<T>> layers_;
  std::uint64_t revision_ = 0;
  std::vector<std::string> provenance_;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline int reflect(int i, int n) {
  if (i < 0)
    return -i;
  if (i >= n)
    return 2 * n - 2 - i;
  return i;
}

// cols[(c*k + ky)*k + kx][y*w + x] = in[c][reflect(y+ky-p)][reflect(x+kx-p)]
// Each output row is a shifted copy of an input row; only the |shift|
// pixels at either end need the reflected index.
template <class T> void im2col(const T *in, int channels, int h, int w, int k, T *cols) {
  const int p = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T *plane = in + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int shift = kx - p;
        const int lo = std::max(0, -shift), hi = std::min(w, w - shift);
        T *row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const T *src = plane + static_cast<std::size_t>(reflect(y + ky - p, h)) * w;
          T *dst = row + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < lo; ++x)
            dst[x] = src[reflect(x + shift, w)];
          std::copy(src + lo + shift, src + hi + shift, dst + lo);
          for (int x = hi; x < w; ++x)
            dst[x] = src[reflect(x + shift, w)];
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
template <class T> void col2im(const T *cols, int channels, int h, int w, int k, T *din) {
  const int p = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T *plane = din + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int shift = kx - p;
        const int lo = std::max(0, -shift), hi = std::min(w, w - shift);
        const T *row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          T *dst = plane + static_cast<std::size_t>(reflect(y + ky - p, h)) * w;
          const T *src = row + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < lo; ++x)
            dst[reflect(x + shift, w)] += src[x];
          using Row = Eigen::Array<T, Eigen::Dynamic, 1>;
          Eigen::Map<Row>(dst + lo + shift, hi - lo) += Eigen::Map<const Row>(src + lo, hi - lo);
          for (int x = hi; x < w; ++x)
            dst[reflect(x + shift, w)] += src[x];
        }
      }
    }
  }
}

/// Resizes scratch storage without shrinking it, so repeated calls with
/// varying sizes do not re-zero memory.
template <class T> T *scratch(Buffer<T> &buf, std::size_t n) {
  if (buf.size() < n)
    buf.resize(n);
  return buf.data();
}

template <class T>
void conv_forward(const ConvLayer<T> &layer, const T *in, int h, int w, T *out,
                  Buffer<T> &cols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int rows = static_cast<int>(layer.fan_in());
  const T *colp = in;
  if (layer.kernel > 1) {
    T *c = scratch(cols, static_cast<std::size_t>(rows) * hw);
    im2col(in, layer.in_channels, h, w, layer.kernel, c);
    colp = c;
  }
  Eigen::Map<const RowMatrix<T>> W(layer.weight.data(), layer.out_channels, rows);
  Eigen::Map<const RowMatrix<T>> C(colp, rows, static_cast<Eigen::Index>(hw));
  Eigen::Map<RowMatrix<T>> O(out, layer.out_channels, static_cast<Eigen::Index>(hw));
  O.noalias() = W * C;
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(layer.bias.data(), layer.out_channels);
  O.colwise() += b;
}

// Accumulates weight/bias gradients into `grad`; writes (overwrites) the
// input gradient into `din` when non-null.
template <class T>
void conv_backward(const ConvLayer<T> &layer, const T *in, int h, int w, const T *dout, T *din,
                   ConvLayer<T> &grad, Buffer<T> &cols, Buffer<T> &dcols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int rows = static_cast<int>(layer.fan_in());
  const T *colp = in;
  if (layer.kernel > 1) {
    T *c = scratch(cols, static_cast<std::size_t>(rows) * hw);
    im2col(in, layer.in_channels, h, w, layer.kernel, c);
    colp = c;
  }
  Eigen::Map<const RowMatrix<T>> W(layer.weight.data(), layer.out_channels, rows);
  Eigen::Map<const RowMatrix<T>> C(colp, rows, static_cast<Eigen::Index>(hw));
  Eigen::Map<const RowMatrix<T>> dO(dout, layer.out_channels, static_cast<Eigen::Index>(hw));
  Eigen::Map<RowMatrix<T>> dW(grad.weight.data(), layer.out_channels, rows);
  dW.noalias() += dO * C.transpose();
  for (int o = 0; o < layer.out_channels; ++o) {
    const T *row = dout + static_cast<std::size_t>(o) * hw;
    double s = 0.0;
    for (std::size_t k = 0; k < hw; ++k)
      s += row[k];
    grad.bias[static_cast<std::size_t>(o)] += static_cast<T>(s);
  }
  if (!din)
    return;
  if (layer.kernel > 1) {
    T *dc = scratch(dcols, static_cast<std::size_t>(rows) * hw);
    Eigen::Map<RowMatrix<T>> dC(dc, rows, static_cast<Eigen::Index>(hw));
    dC.noalias() = W.transpose() * dO;
    std::fill(din, din + static_cast<std::size_t>(layer.in_channels) * hw, T(0));
    col2im(dc, layer.in_channels, h, w, layer.kernel, din);
  } else {
    Eigen::Map<RowMatrix<T>> dI(din, rows, static_cast<Eigen::Index>(hw));
    dI.noalias() = W.transpose() * dO;
  }
}

template <class T> void leaky_relu(Buffer<T> &v, T slope) {
  for (auto &x : v)
    x = x > T(0) ? x : slope * x;
}

// grad *= d(leaky)/d(pre), read off the post-activation sign.
template <class T> void leaky_relu_backward(const Buffer<T> &post, Buffer<T> &grad, T slope) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(post[i] > T(0)))
      grad[i] *= slope;
}

template <class T>
void maxpool2(const Buffer<T> &in, int c, int h, int w, Buffer<T> &out,
              std::vector<std::uint32_t> &argmax) {
  const int oh = h / 2, ow = w / 2;
  out.resize(static_cast<std::size_t>(c) * oh * ow);
  argmax.resize(out.size());
  for (int ch = 0; ch < c; ++ch) {
    const T *plane = in.data() + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * w + 2 * x);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::uint32_t>((2 * y + dy) * w + 2 * x + dx);
            if (plane[idx] > plane[best])
              best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(ch) * oh + y) * ow + x;
        out[o] = plane[best];
        argmax[o] = static_cast<std::uint32_t>(static_cast<std::size_t>(ch) * h * w + best);
      }
    }
  }
}

// Nearest-neighbour 2x upsample of `in` (c, h, w) into out[offset...].
template <class T> void upsample2(const T *in, int c, int h, int w, T *out) {
  const int oh = 2 * h, ow = 2 * w;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y) {
      const T *src = in + (static_cast<std::size_t>(ch) * h + y / 2) * w;
      T *dst = out + (static_cast<std::size_t>(ch) * oh + y) * ow;
      for (int x = 0; x < ow; ++x)
        dst[x] = src[x / 2];
    }
}

// Adjoint of upsample2: sums each 2x2 block.
template <class T> void upsample2_backward(const T *dout, int c, int h, int w, T *din) {
  const int ow = 2 * w;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T *b = dout + (static_cast<std::size_t>(ch) * 2 * h + 2 * y) * ow + 2 * x;
        din[(static_cast<std::size_t>(ch) * h + y) * w + x] = b[0] + b[1] + b[ow] + b[ow + 1];
      }
}

template <class T> struct SampleCache {
  Buffer<T> input;
  std::vector<Buffer<T>> enc_a, skip, pooled;
  std::vector<std::vector<std::uint32_t>> pool_idx;
  Buffer<T> bottleneck;
  std::vector<Buffer<T>> up, dec_a, dec_b;
};

} // namespace detail

/// Intermediates of one forward pass, consumed by backward().
template <class T> struct ForwardCache {
  const void *params_id = nullptr;
  std::uint64_t revision = 0;
  int batch = 0, height = 0, width = 0;
  std::vector<detail::SampleCache<T>> samples;
  // im2col scratch, kept here so repeated steps reuse the allocation.
  mutable Buffer<T> cols, dcols;
};

namespace detail {

template <class T> void check_input(const NetworkParams<T> &params, const Tensor<T> &input) {
  const auto &cfg = params.config();
  if (input.channels() != 1)
    throw ShapeError("network expects single-channel input");
  const int div = cfg.size_divisor();
  if (input.height() % div != 0 || input.width() % div != 0)
    throw ShapeError("input size " + std::to_string(input.width()) + "x" +
                     std::to_string(input.height()) + " is not divisible by " + std::to_string(div));
  if (input.height() < cfg.min_size() || input.width() < cfg.min_size())
    throw ShapeError("input smaller than the minimum size " + std::to_string(cfg.min_size()));
}

template <class T>
void forward_sample(const NetworkParams<T> &params, const T *input, int h, int w, T *despeckled,
                    SampleCache<T> &sc, Buffer<T> &cols) {
  const auto &cfg = params.config();
  const int d = cfg.depth;
  const auto &ch = cfg.channels;
  const T slope = static_cast<T>(cfg.leaky_slope);
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  sc.input.assign(input, input + hw);
  sc.enc_a.resize(d);
  sc.skip.resize(d);
  sc.pooled.resize(d);
  sc.pool_idx.resize(d);
  sc.up.resize(d);
  sc.dec_a.resize(d);
  sc.dec_b.resize(d);

  int lh = h, lw = w;
  const T *x = sc.input.data();
  for (int l = 0; l < d; ++l) {
    const std::size_t n = static_cast<std::size_t>(ch[l]) * lh * lw;
    sc.enc_a[l].resize(n);
    conv_forward(params.layer(params.enc_index(l, 0)), x, lh, lw, sc.enc_a[l].data(), cols);
    leaky_relu(sc.enc_a[l], slope);
    sc.skip[l].resize(n);
    conv_forward(params.layer(params.enc_index(l, 1)), sc.enc_a[l].data(), lh, lw,
                 sc.skip[l].data(), cols);
    leaky_relu(sc.skip[l], slope);
    maxpool2(sc.skip[l], ch[l], lh, lw, sc.pooled[l], sc.pool_idx[l]);
    lh /= 2;
    lw /= 2;
    x = sc.pooled[l].data();
  }
  sc.bottleneck.resize(static_cast<std::size_t>(ch[d - 1]) * lh * lw);
  conv_forward(params.layer(params.bottleneck_index()), x, lh, lw, sc.bottleneck.data(), cols);
  leaky_relu(sc.bottleneck, slope);

  const Buffer<T> *u = &sc.bottleneck;
  int uc = ch[d - 1];
  for (int l = d - 1; l >= 0; --l) {
    const int oh = lh * 2, ow = lw * 2;
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    sc.up[l].resize(static_cast<std::size_t>(uc + ch[l]) * ohw);
    upsample2(u->data(), uc, lh, lw, sc.up[l].data());
    std::copy(sc.skip[l].begin(), sc.skip[l].end(), sc.up[l].begin() + uc * ohw);
    sc.dec_a[l].resize(static_cast<std::size_t>(ch[l]) * ohw);
    conv_forward(params.layer(params.dec_index(l, 0)), sc.up[l].data(), oh, ow,
                 sc.dec_a[l].data(), cols);
    leaky_relu(sc.dec_a[l], slope);
    sc.dec_b[l].resize(static_cast<std::size_t>(ch[l]) * ohw);
    conv_forward(params.layer(params.dec_index(l, 1)), sc.dec_a[l].data(), oh, ow,
                 sc.dec_b[l].data(), cols);
    leaky_relu(sc.dec_b[l], slope);
    u = &sc.dec_b[l];
    uc = ch[l];
    lh = oh;
    lw = ow;
  }
  Buffer<T> raw(hw);
  conv_forward(params.layer(params.out_index()), u->data(), h, w, raw.data(), cols);
  for (std::size_t i = 0; i < hw; ++i)
    despeckled[i] = input[i] - raw[i];
}

template <class T>
void backward_sample(const NetworkParams<T> &params, const SampleCache<T> &sc, int h, int w,
                     const T *grad_despeckled, NetworkParams<T> &grads, Buffer<T> &cols,
                     Buffer<T> &dcols) {
  const auto &cfg = params.config();
  const int d = cfg.depth;
  const auto &ch = cfg.channels;
  const T slope = static_cast<T>(cfg.leaky_slope);
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  // despeckled = input - raw
  Buffer<T> draw(hw);
  for (std::size_t i = 0; i < hw; ++i)
    draw[i] = -grad_despeckled[i];

  std::vector<Buffer<T>> dskip(d);
  for (int l = 0; l < d; ++l)
    dskip[l].assign(sc.skip[l].size(), T(0));

  // Decoder, undone from the finest level upwards.
  Buffer<T> du(sc.dec_b[0].size());
  conv_backward(params.layer(params.out_index()), sc.dec_b[0].data(), h, w, draw.data(), du.data(),
                grads.layer(params.out_index()), cols, dcols);
  int lh = h, lw = w;
  Buffer<T> da, dup, dbelow;
  for (int l = 0; l < d; ++l) {
    leaky_relu_backward(sc.dec_b[l], du, slope);
    da.resize(sc.dec_a[l].size());
    conv_backward(params.layer(params.dec_index(l, 1)), sc.dec_a[l].data(), lh, lw, du.data(),
                  da.data(), grads.layer(params.dec_index(l, 1)), cols, dcols);
    leaky_relu_backward(sc.dec_a[l], da, slope);
    dup.resize(sc.up[l].size());
    conv_backward(params.layer(params.dec_index(l, 0)), sc.up[l].data(), lh, lw, da.data(),
                  dup.data(), grads.layer(params.dec_index(l, 0)), cols, dcols);
    const int uc = (l == d - 1) ? ch[d - 1] : ch[l + 1];
    const std::size_t lhw = static_cast<std::size_t>(lh) * lw;
    for (std::size_t i = 0; i < dskip[l].size(); ++i)
      dskip[l][i] += dup[uc * lhw + i];
    dbelow.resize(static_cast<std::size_t>(uc) * (lh / 2) * (lw / 2));
    upsample2_backward(dup.data(), uc, lh / 2, lw / 2, dbelow.data());
    du.swap(dbelow);
    lh /= 2;
    lw /= 2;
  }

  // du now holds the gradient of the bottleneck output.
  leaky_relu_backward(sc.bottleneck, du, slope);
  Buffer<T> dpooled(sc.pooled[d - 1].size());
  conv_backward(params.layer(params.bottleneck_index()), sc.pooled[d - 1].data(), lh, lw,
                du.data(), dpooled.data(), grads.layer(params.bottleneck_index()), cols, dcols);

  // Encoder, deepest level first.
  for (int l = d - 1; l >= 0; --l) {
    for (std::size_t i = 0; i < dpooled.size(); ++i)
      dskip[l][sc.pool_idx[l][i]] += dpooled[i];
    lh *= 2;
    lw *= 2;
    leaky_relu_backward(sc.skip[l], dskip[l], slope);
    da.resize(sc.enc_a[l].size());
    conv_backward(params.layer(params.enc_index(l, 1)), sc.enc_a[l].data(), lh, lw,
                  dskip[l].data(), da.data(), grads.layer(params.enc_index(l, 1)), cols, dcols);
    leaky_relu_backward(sc.enc_a[l], da, slope);
    const T *in = l == 0 ? sc.input.data() : sc.pooled[l - 1].data();
    if (l > 0) {
      dpooled.resize(sc.pooled[l - 1].size());
      conv_backward(params.layer(params.enc_index(l, 0)), in, lh, lw, da.data(), dpooled.data(),
                    grads.layer(params.enc_index(l, 0)), cols, dcols);
    } else {
      conv_backward(params.layer(params.enc_index(l, 0)), in, lh, lw, da.data(),
                    static_cast<T *>(nullptr), grads.layer(params.enc_index(l, 0)), cols, dcols);
    }
  }
}

} // namespace detail

/// Runs the network on a (n, 1, h, w) batch of log-intensity patches and
/// returns the despeckled batch. Fills `cache` for backward() when given.
template <class T>
Tensor<T> forward(const NetworkParams<T> &params, const Tensor<T> &input,
                  ForwardCache<T> *cache = nullptr) {
  detail::check_input(params, input);
  Tensor<T> out(input.batch(), 1, input.height(), input.width());
  Buffer<T> local_cols;
  Buffer<T> &cols = cache ? cache->cols : local_cols;
  detail::SampleCache<T> scratch;
  if (cache) {
    cache->params_id = &params;
    cache->revision = params.revision();
    cache->batch = input.batch();
    cache->height = input.height();
    cache->width = input.width();
    cache->samples.resize(static_cast<std::size_t>(input.batch()));
  }
  for (int i = 0; i < input.batch(); ++i) {
    auto &sc = cache ? cache->samples[static_cast<std::size_t>(i)] : scratch;
    detail::forward_sample(params, input.sample(i), input.height(), input.width(), out.sample(i),
                           sc, cols);
  }
  return out;
}

/// Gradients of the loss with respect to every parameter, given the loss
/// gradient with respect to the despeckled output. Samples are reduced in
/// batch order.
template <class T>
NetworkParams<T> backward(const NetworkParams<T> &params, const ForwardCache<T> &cache,
                          const Tensor<T> &grad_despeckled) {
  if (cache.params_id != &params || cache.revision != params.revision())
    throw std::logic_error("stale forward cache: parameters changed since forward()");
  if (grad_despeckled.batch() != cache.batch || grad_despeckled.height() != cache.height ||
      grad_despeckled.width() != cache.width || grad_despeckled.channels() != 1)
    throw ShapeError("loss gradient does not match the cached forward pass");
  NetworkParams<T> grads = params.zeros_like();
  for (int i = 0; i < cache.batch; ++i)
    detail::backward_sample(params, cache.samples[static_cast<std::size_t>(i)], cache.height,
                            cache.width, grad_despeckled.sample(i), grads, cache.cols,
                            cache.dcols);
  return grads;
}

} // namespace sar2sar
