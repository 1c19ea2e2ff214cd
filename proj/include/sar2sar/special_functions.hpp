#pragma once

// Special functions for log-speckle statistics.
//
// digamma and trigamma use upward recurrence to x >= 10 followed by the
// Bernoulli asymptotic series truncated after the x^-14 (resp. x^-15) term;
// the truncation error there is below 1e-16 and the recurrence adds at most
// a few ulps, well inside the 1e-12 budget.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace sar2sar::special {

namespace detail {

inline constexpr double kAsymptoticThreshold = 10.0;

// psi(x) - log(x) for x >= kAsymptoticThreshold, without forming log(x).
inline double digamma_minus_log_asymptotic(double x) {
  const double r = 1.0 / x;
  const double r2 = r * r;
  // -1/(2x) - sum_n B_2n / (2n x^2n)
  const double series =
      r2 * (-1.0 / 12 +
            r2 * (1.0 / 120 +
                  r2 * (-1.0 / 252 +
                        r2 * (1.0 / 240 +
                              r2 * (-1.0 / 132 + r2 * (691.0 / 32760 + r2 * (-1.0 / 12)))))));
  return -0.5 * r + series;
}

inline double trigamma_asymptotic(double x) {
  const double r = 1.0 / x;
  const double r2 = r * r;
  // 1/x + 1/(2x^2) + sum_n B_2n / x^(2n+1)
  const double series =
      r * r2 *
      (1.0 / 6 +
       r2 * (-1.0 / 30 +
             r2 * (1.0 / 42 +
                   r2 * (-1.0 / 30 + r2 * (5.0 / 66 + r2 * (-691.0 / 2730 + r2 * (7.0 / 6)))))));
  return r + 0.5 * r2 + series;
}

inline void require_positive(double x, const char *fn) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw std::domain_error(std::string(fn) + ": argument must be positive and finite");
}

} // namespace detail

/// psi(x) - log(x), accurate even for large x where both terms are close.
inline double digamma_minus_log(double x) {
  detail::require_positive(x, "digamma_minus_log");
  if (x >= detail::kAsymptoticThreshold)
    return detail::digamma_minus_log_asymptotic(x);
  double shift = 0.0;
  double y = x;
  while (y < detail::kAsymptoticThreshold) {
    shift -= 1.0 / y;
    y += 1.0;
  }
  return shift + std::log(y) + detail::digamma_minus_log_asymptotic(y) - std::log(x);
}

/// Digamma function psi(x) for x > 0.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double shift = 0.0;
  double y = x;
  while (y < detail::kAsymptoticThreshold) {
    shift -= 1.0 / y;
    y += 1.0;
  }
  return shift + std::log(y) + detail::digamma_minus_log_asymptotic(y);
}

/// Trigamma function psi(1, x) for x > 0.
inline double trigamma(double x) {
  detail::require_positive(x, "trigamma");
  double shift = 0.0;
  double y = x;
  while (y < detail::kAsymptoticThreshold) {
    shift += 1.0 / (y * y);
    y += 1.0;
  }
  return shift + detail::trigamma_asymptotic(y);
}

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (x <= 0.0)
    return 0.0;
  return boost::math::gamma_p(a, x);
}

/// Quantile of the unit-mean gamma law with shape `looks` (rate `looks`),
/// found by bisection on P(looks, looks*s) to an absolute tolerance `tol`.
inline double unit_gamma_quantile(double looks, double p, double tol = 1e-10) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("unit_gamma_quantile: p must lie in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  while (gamma_p(looks, looks * hi) < p)
    hi *= 2.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(looks, looks * mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace sar2sar::special
