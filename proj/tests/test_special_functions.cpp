#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <gtest/gtest.h>

#include "sar2sar/special_functions.hpp"
#include "sar2sar/speckle.hpp"

using namespace sar2sar;

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

// Independent series oracle: psi(1, x) = sum_{n>=0} 1/(x+n)^2, with the
// tail beyond N replaced by its Euler-Maclaurin estimate.
long double trigamma_series(long double x) {
  constexpr int N = 2000;
  long double s = 0.0L;
  for (int n = 0; n < N; ++n)
    s += 1.0L / ((x + n) * (x + n));
  const long double a = x + N;
  return s + 1.0L / a + 1.0L / (2 * a * a) + 1.0L / (6 * a * a * a);
}

// psi(x) = -gamma + sum_{n>=0} (1/(n+1) - 1/(n+x)), tail via Euler-Maclaurin.
long double digamma_series(long double x) {
  constexpr int N = 2000;
  long double s = -kEulerGamma;
  for (int n = 0; n < N; ++n)
    s += 1.0L / (n + 1) - 1.0L / (n + x);
  // sum_{n>=N} (1/(n+1) - 1/(n+x)) ~ log((N+x-1/2)/(N+1/2)) to O(N^-3)
  const long double a = N + x - 0.5L, b = N + 0.5L;
  return s + std::log(a / b) + (1.0L / (24 * a * a) - 1.0L / (24 * b * b));
}

} // namespace

TEST(SpecialFunctions, DigammaKnownValues) {
  EXPECT_NEAR(special::digamma(1.0), -kEulerGamma, 1e-14);
  EXPECT_NEAR(special::digamma(2.0), 1.0 - kEulerGamma, 1e-14);
  EXPECT_NEAR(special::digamma(0.5), -kEulerGamma - 2.0 * std::numbers::ln2, 1e-13);
}

TEST(SpecialFunctions, DigammaMatchesSeriesAndBoost) {
  for (double x = 0.25; x < 60.0; x *= 1.37) {
    EXPECT_NEAR(special::digamma(x), static_cast<double>(digamma_series(x)), 1e-11) << x;
    EXPECT_NEAR(special::digamma(x), boost::math::digamma(x), 1e-12) << x;
  }
}

TEST(SpecialFunctions, TrigammaMatchesSeriesAndBoost) {
  EXPECT_NEAR(special::trigamma(1.0), std::numbers::pi * std::numbers::pi / 6.0, 1e-14);
  for (double x = 0.25; x < 60.0; x *= 1.37) {
    EXPECT_NEAR(special::trigamma(x), static_cast<double>(trigamma_series(x)), 1e-12) << x;
    EXPECT_NEAR(special::trigamma(x), boost::math::trigamma(x), 1e-12) << x;
  }
}

TEST(SpecialFunctions, DigammaMinusLogIsStableForLargeArguments) {
  for (double x : {1.0, 3.5, 9.99, 10.0, 10.01, 1e3, 1e6, 1e9}) {
    const double expected = boost::math::digamma(x) - std::log(x);
    EXPECT_NEAR(special::digamma_minus_log(x), expected, 1e-12 + 1e-9 * std::abs(expected)) << x;
  }
  // Direct asymptotics: -1/(2x) - 1/(12x^2)
  EXPECT_NEAR(special::digamma_minus_log(1e6), -0.5e-6 - 1.0 / 12e12, 1e-18);
}

TEST(SpecialFunctions, RejectNonPositiveArguments) {
  EXPECT_THROW(special::digamma(0.0), std::domain_error);
  EXPECT_THROW(special::trigamma(-1.0), std::domain_error);
  EXPECT_THROW(special::digamma(std::nan("")), std::domain_error);
}

TEST(SpecialFunctions, UnitGammaQuantileMatchesClosedFormAndBoost) {
  for (double p : {1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
    // L = 1 is exponential: Q(p) = -log(1 - p)
    EXPECT_NEAR(special::unit_gamma_quantile(1.0, p), -std::log1p(-p), 2e-10) << p;
    for (double L : {2.0, 4.0, 7.5})
      EXPECT_NEAR(special::unit_gamma_quantile(L, p), boost::math::gamma_p_inv(L, p) / L, 2e-10)
          << L << " " << p;
  }
  EXPECT_THROW(special::unit_gamma_quantile(1.0, 0.0), std::domain_error);
  EXPECT_THROW(special::unit_gamma_quantile(1.0, 1.0), std::domain_error);
}

TEST(LogSpeckleMoments, FrozenOracleValues) {
  // bias(1) = -gamma, bias(2) = 1 - gamma - log 2
  EXPECT_NEAR(log_speckle_bias(LooksCount(1)), -0.5772156649015329, 1e-12);
  EXPECT_NEAR(log_speckle_bias(LooksCount(2)), -0.2703628454614782, 1e-12);
  // var(1) = pi^2/6, var(2) = pi^2/6 - 1
  EXPECT_NEAR(log_speckle_var(LooksCount(1)), 1.6449340668482264, 1e-12);
  EXPECT_NEAR(log_speckle_var(LooksCount(2)), 0.6449340668482264, 1e-12);
}

TEST(LogSpeckleMoments, BiasVanishesForManyLooks) {
  const double b = log_speckle_bias(LooksCount(1e6));
  EXPECT_LT(std::abs(b), 1e-6);
  EXPECT_NEAR(b, -1.0 / (2e6), 1e-12);
}

TEST(LogSpeckleMoments, VarianceStrictlyDecreasing) {
  double prev = log_speckle_var(LooksCount(1.0));
  for (double L = 1.5; L <= 16.0; L += 0.5) {
    const double v = log_speckle_var(LooksCount(L));
    EXPECT_LT(v, prev) << L;
    prev = v;
  }
}

TEST(LogSpeckleMoments, RejectTooFewLooks) {
  EXPECT_THROW(LooksCount(0.5), std::invalid_argument);
  EXPECT_THROW(LooksCount(std::numeric_limits<double>::infinity()), std::invalid_argument);
}
