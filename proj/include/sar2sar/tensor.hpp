#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sar2sar/buffer.hpp"
#include "sar2sar/image.hpp"

namespace sar2sar {

/// Dense (batch, channels, height, width) array.
template <class T> class Tensor {
public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0)) : n_(n), c_(c), h_(h), w_(w) {
    if (n < 1 || c < 1 || h < 1 || w < 1)
      throw std::invalid_argument("tensor dimensions must be positive");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  int batch() const { return n_; }
  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }

  T *sample(int i) { return data_.data() + i * sample_size(); }
  const T *sample(int i) const { return data_.data() + i * sample_size(); }
  std::span<T> sample_span(int i) { return {sample(i), sample_size()}; }
  std::span<const T> sample_span(int i) const { return {sample(i), sample_size()}; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool same_shape(const Tensor &o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  bool all_finite() const {
    for (const T &v : data_)
      if (!std::isfinite(v))
        return false;
    return true;
  }

  friend bool operator==(const Tensor &, const Tensor &) = default;

private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  Buffer<T> data_;
};

/// Stacks single-channel images into a (n, 1, h, w) tensor.
template <class T> Tensor<T> stack_images(std::span<const Image> images) {
  if (images.empty())
    throw std::invalid_argument("cannot stack zero images");
  const int h = images[0].height(), w = images[0].width();
  Tensor<T> t(static_cast<int>(images.size()), 1, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width() != w || images[i].height() != h)
      throw ShapeError("stacked images must share a shape");
    T *dst = t.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < images[i].size(); ++k)
      dst[k] = static_cast<T>(images[i][k]);
  }
  return t;
}

template <class T> Image unstack_image(const Tensor<T> &t, int index, Domain domain) {
  Image img(t.width(), t.height(), domain);
  const T *src = t.sample(index);
  for (std::size_t k = 0; k < img.size(); ++k)
    img[k] = static_cast<double>(src[k]);
  return img;
}

} // namespace sar2sar
