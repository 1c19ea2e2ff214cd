#pragma once

// Self-supervised losses on log-intensity images.
//
// Likelihood loss (Fisher-Tippett co-log-likelihood with the constant and
// the factor L dropped), per pixel:   f - y2 + exp(y2 - f)
// Debiased l2 loss, per pixel:        (f - y2 + psi(L) - log L)^2
//
// All reductions accumulate in double whatever the storage type.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sar2sar/error.hpp"
#include "sar2sar/image.hpp"
#include "sar2sar/speckle.hpp"

namespace sar2sar {

enum class LossKind { likelihood, l2_debiased };

inline std::string_view to_string(LossKind k) {
  return k == LossKind::likelihood ? "likelihood" : "l2";
}

struct LossValue {
  double total = 0.0;
  std::vector<double> per_pixel;
};

/// Exponents y2 - f above this are reported instead of overflowing.
inline constexpr double kLossExponentLimit = 700.0;

namespace detail {

inline void check_sizes(std::size_t a, std::size_t b) {
  if (a != b)
    throw ShapeError("loss operands differ in size (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
}

inline double checked_exp_gap(double gap) {
  if (gap > kLossExponentLimit || std::isnan(gap))
    throw NumericError("likelihood loss overflow: target minus prediction = " +
                       std::to_string(gap));
  return std::exp(gap);
}

inline void require_log_domain(const Image &a, const Image &b) {
  require_same_shape(a, b, "loss");
  if (a.domain() != Domain::log_intensity || b.domain() != Domain::log_intensity)
    throw std::invalid_argument("losses operate on log-intensity images");
}

} // namespace detail

/// Likelihood loss total; writes d(loss)/d(pred) into `grad` when non-empty.
template <class T>
double likelihood_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {}) {
  detail::check_sizes(pred.size(), target.size());
  const bool want_grad = !grad.empty();
  if (want_grad)
    detail::check_sizes(pred.size(), grad.size());
  double total = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double f = pred[k];
    const double e = detail::checked_exp_gap(static_cast<double>(target[k]) - f);
    total += f - static_cast<double>(target[k]) + e;
    if (want_grad)
      grad[k] = static_cast<T>(1.0 - e);
  }
  return total;
}

/// Debiased l2 loss total; writes the gradient into `grad` when non-empty.
template <class T>
double l2_debiased_loss(std::span<const T> pred, std::span<const T> target, LooksCount looks,
                        std::span<T> grad = {}) {
  detail::check_sizes(pred.size(), target.size());
  const bool want_grad = !grad.empty();
  if (want_grad)
    detail::check_sizes(pred.size(), grad.size());
  const double bias = log_speckle_bias(looks);
  double total = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double r = static_cast<double>(pred[k]) - static_cast<double>(target[k]) + bias;
    total += r * r;
    if (want_grad)
      grad[k] = static_cast<T>(2.0 * r);
  }
  return total;
}

template <class T>
double loss_and_grad(LossKind kind, std::span<const T> pred, std::span<const T> target,
                     LooksCount looks, std::span<T> grad = {}) {
  return kind == LossKind::likelihood ? likelihood_loss<T>(pred, target, grad)
                                      : l2_debiased_loss<T>(pred, target, looks, grad);
}

inline LossValue loss_likelihood(const Image &pred, const Image &y2) {
  detail::require_log_domain(pred, y2);
  LossValue out;
  out.per_pixel.resize(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double e = detail::checked_exp_gap(y2[k] - pred[k]);
    out.per_pixel[k] = pred[k] - y2[k] + e;
    out.total += out.per_pixel[k];
  }
  return out;
}

/// 1 - exp(y2 - pred), pixelwise.
inline Image loss_likelihood_grad(const Image &pred, const Image &y2) {
  detail::require_log_domain(pred, y2);
  Image g(pred.width(), pred.height(), Domain::log_intensity);
  likelihood_loss<double>(pred.values(), y2.values(), g.values());
  return g;
}

inline LossValue loss_l2_debiased(const Image &pred, const Image &y2, LooksCount looks) {
  detail::require_log_domain(pred, y2);
  const double bias = log_speckle_bias(looks);
  LossValue out;
  out.per_pixel.resize(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double r = pred[k] - y2[k] + bias;
    out.per_pixel[k] = r * r;
    out.total += out.per_pixel[k];
  }
  return out;
}

/// 2 (pred - y2 + psi(L) - log L), pixelwise.
inline Image loss_l2_debiased_grad(const Image &pred, const Image &y2, LooksCount looks) {
  detail::require_log_domain(pred, y2);
  Image g(pred.width(), pred.height(), Domain::log_intensity);
  l2_debiased_loss<double>(pred.values(), y2.values(), looks, g.values());
  return g;
}

} // namespace sar2sar
