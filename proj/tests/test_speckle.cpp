#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "sar2sar/speckle.hpp"

using namespace sar2sar;

namespace {

struct Moments {
  double mean = 0, var = 0, m4 = 0;
  std::size_t n = 0;
  double se_mean() const { return std::sqrt(var / n); }
  // Standard error of the sample variance from the fourth central moment.
  double se_var() const { return std::sqrt((m4 - var * var) / n); }
};

Moments moments(const std::vector<double> &v) {
  Moments m;
  m.n = v.size();
  for (double x : v)
    m.mean += x;
  m.mean /= m.n;
  for (double x : v) {
    const double d = x - m.mean;
    m.var += d * d;
    m.m4 += d * d * d * d;
  }
  m.var /= (m.n - 1);
  m.m4 /= m.n;
  return m;
}

// Adaptive Simpson on [a, b].
template <class F> double simpson(F f, double a, double b, double fa, double fm, double fb,
                                  double whole, double tol, int depth) {
  const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

template <class F> double integrate(F f, double a, double b, double tol) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 50);
}

} // namespace

TEST(SampleSpeckle, OneLookMomentsAndTail) {
  Rng rng(11);
  const auto s = sample_speckle(1000, 1000, LooksCount(1), rng);
  const auto m = moments(s.values);
  EXPECT_NEAR(m.mean, 1.0, 0.005);
  EXPECT_NEAR(m.var, 1.0, 0.01);
  const double tail =
      std::count_if(s.values.begin(), s.values.end(), [](double v) { return v > 1.0; }) / 1e6;
  // P(S > 1) = e^-1 for the exponential law; binomial SE ~ 4.8e-4.
  EXPECT_NEAR(tail, std::exp(-1.0), 0.0025);
}

TEST(SampleSpeckle, FourLookVariance) {
  Rng rng(12);
  const auto s = sample_speckle(1000, 1000, LooksCount(4), rng);
  EXPECT_NEAR(moments(s.values).var, 0.25, 0.0025);
}

TEST(SampleSpeckle, MomentsWithinThreeStandardErrors) {
  for (double L : {1.0, 2.0, 2.5, 4.0, 8.0}) {
    Rng rng(100 + static_cast<int>(10 * L));
    const auto s = sample_speckle(500, 400, LooksCount(L), rng);
    const auto m = moments(s.values);
    EXPECT_LT(std::abs(m.mean - 1.0), 3 * m.se_mean()) << L;
    EXPECT_LT(std::abs(m.var - 1.0 / L), 3 * m.se_var()) << L;
  }
}

TEST(SampleSpeckle, LogMomentsMatchDigammaTrigamma) {
  for (double L : {1.0, 2.0, 4.0, 8.0}) {
    Rng rng(7 + static_cast<int>(L));
    auto s = sample_speckle(400, 500, LooksCount(L), rng);
    for (auto &v : s.values)
      v = std::log(v);
    const auto m = moments(s.values);
    EXPECT_LT(std::abs(m.mean - log_speckle_bias(LooksCount(L))), 3 * m.se_mean()) << L;
    EXPECT_LT(std::abs(m.var - log_speckle_var(LooksCount(L))), 3 * m.se_var()) << L;
  }
}

TEST(SampleSpeckle, LogSamplesFollowFisherTippett) {
  Rng rng(5);
  auto s = sample_speckle(1000, 100, LooksCount(1), rng);
  std::vector<double> logs(s.values.size());
  std::transform(s.values.begin(), s.values.end(), logs.begin(), [](double v) { return std::log(v); });
  std::sort(logs.begin(), logs.end());
  const std::size_t n = logs.size();
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (i + 0.5) / n;
    w += std::abs(logs[i] - std::log(boost::math::gamma_p_inv(1.0, p)));
  }
  EXPECT_LT(w / n, 0.01);
}

TEST(SampleSpeckle, DeterministicPerSeed) {
  Rng a(42), b(42), c(43);
  const auto kernel = CorrelationKernel::gaussian(1.0, 2);
  EXPECT_EQ(sample_speckle(32, 16, LooksCount(3), a).values,
            sample_speckle(32, 16, LooksCount(3), b).values);
  EXPECT_NE(sample_speckle(32, 16, LooksCount(3), a).values,
            sample_speckle(32, 16, LooksCount(3), c).values);
  Rng d(9), e(9);
  EXPECT_EQ(sample_speckle(32, 32, LooksCount(2), d, kernel).values,
            sample_speckle(32, 32, LooksCount(2), e, kernel).values);
}

TEST(SampleSpeckle, CorrelatedSpeckleUnitMeanAndLagOneCorrelation) {
  Rng rng(77);
  const int n = 512;
  const auto s = sample_speckle(n, n, LooksCount(1), rng, CorrelationKernel::gaussian(1.0, 2));
  // Block means over 16x16 tiles are nearly independent; use them for the SE.
  std::vector<double> blocks;
  for (int by = 0; by < n; by += 16)
    for (int bx = 0; bx < n; bx += 16) {
      double sum = 0;
      for (int y = by; y < by + 16; ++y)
        for (int x = bx; x < bx + 16; ++x)
          sum += s.values[static_cast<std::size_t>(y) * n + x];
      blocks.push_back(sum / 256);
    }
  const auto bm = moments(blocks);
  EXPECT_LT(std::abs(bm.mean - 1.0), 3 * bm.se_mean());

  const auto m = moments(s.values);
  double cov = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x + 1 < n; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      cov += (s.values[i] - m.mean) * (s.values[i + 1] - m.mean);
    }
  cov /= static_cast<double>(n) * (n - 1);
  EXPECT_GT(cov / m.var, 0.2);
  // Marginals stay exponential: variance ~ 1.
  EXPECT_NEAR(m.var, 1.0, 0.05);
}

TEST(SampleSpeckle, UncorrelatedHasNoLagOneCorrelation) {
  Rng rng(78);
  const int n = 512;
  const auto s = sample_speckle(n, n, LooksCount(1), rng);
  const auto m = moments(s.values);
  double cov = 0.0;
  for (std::size_t i = 0; i + 1 < s.values.size(); ++i)
    cov += (s.values[i] - m.mean) * (s.values[i + 1] - m.mean);
  cov /= static_cast<double>(s.values.size() - 1);
  EXPECT_LT(std::abs(cov / m.var), 3.0 / n); // SE of lag-1 correlation ~ 1/sqrt(N)
}

TEST(SampleSpeckle, Errors) {
  Rng rng(1);
  EXPECT_THROW(sample_speckle(0, 4, LooksCount(1), rng), std::invalid_argument);
  EXPECT_THROW(sample_speckle(4, 4, LooksCount(1), rng, CorrelationKernel::box(5)),
               std::invalid_argument);
  EXPECT_THROW(sample_speckle(8, 8, LooksCount(1.5), rng, CorrelationKernel::box(3)),
               std::invalid_argument);
  EXPECT_THROW(LooksCount(std::nan("")), std::invalid_argument);
}

TEST(Corrupt, ZeroReflectivityStaysZero) {
  Rng rng(3);
  const Image x(16, 16, Domain::reflectivity, 0.0);
  const Image y = corrupt(x, LooksCount(1), rng);
  EXPECT_EQ(y.domain(), Domain::intensity);
  for (double v : y.values())
    EXPECT_EQ(v, 0.0);
}

TEST(Corrupt, ConstantReflectivityMeanAndVariance) {
  const double c = 3.7;
  const Image x(1000, 1000, Domain::reflectivity, c);
  Rng r1(21);
  const auto m1 = moments(corrupt(x, LooksCount(1), r1).data());
  EXPECT_NEAR(m1.mean, c, 0.005 * c);
  Rng r4(22);
  const auto m4 = moments(corrupt(x, LooksCount(4), r4).data());
  EXPECT_NEAR(m4.var, c * c / 4, 0.02 * c * c / 4);
}

TEST(Corrupt, IndependentStreamsGiveIndependentRealizations) {
  const Image x(256, 256, Domain::reflectivity, 1.0);
  Rng base(5);
  Rng r1 = base.derive(1), r2 = base.derive(2);
  const Image a = corrupt(x, LooksCount(1), r1), b = corrupt(x, LooksCount(1), r2);
  double cov = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    cov += (a[i] - 1.0) * (b[i] - 1.0);
  cov /= a.size();
  EXPECT_LT(std::abs(cov), 3.0 / 256);
}

TEST(Corrupt, RejectsWrongDomain) {
  Rng rng(1);
  EXPECT_THROW(corrupt(Image(4, 4, Domain::intensity, 1.0), LooksCount(1), rng),
               std::invalid_argument);
}

TEST(LogTransform, Values) {
  Image y(3, 1, Domain::intensity, std::vector<double>{1.0, std::exp(1.0), 0.0});
  const Image l = log_transform(y, 1e-10);
  EXPECT_EQ(l.domain(), Domain::log_intensity);
  EXPECT_DOUBLE_EQ(l[0], 0.0);
  EXPECT_NEAR(l[1], 1.0, 1e-15);
  EXPECT_NEAR(l[2], -23.025850929940457, 1e-12);
  EXPECT_THROW(log_transform(y, 0.0), std::invalid_argument);
}

TEST(FisherTippett, LogPdfAtZeroForOneLook) {
  EXPECT_NEAR(fisher_tippett_logpdf(0.0, LooksCount(1)), -1.0, 1e-15);
}

TEST(FisherTippett, PdfIntegratesToOne) {
  for (double L : {1.0, 2.0, 3.3, 4.0, 8.0}) {
    const auto pdf = [L](double s) { return std::exp(fisher_tippett_logpdf(s, LooksCount(L))); };
    EXPECT_NEAR(integrate(pdf, -40.0, 10.0, 1e-10), 1.0, 1e-6) << L;
  }
}

TEST(FisherTippett, ModeAtZero) {
  for (double L : {1.0, 2.0, 4.0, 8.0}) {
    const LooksCount looks(L);
    const double at0 = fisher_tippett_logpdf(0.0, looks);
    EXPECT_GT(at0, fisher_tippett_logpdf(1e-3, looks));
    EXPECT_GT(at0, fisher_tippett_logpdf(-1e-3, looks));
    // derivative L - L e^s vanishes at 0
    const double h = 1e-5;
    EXPECT_NEAR((fisher_tippett_logpdf(h, looks) - fisher_tippett_logpdf(-h, looks)) / (2 * h), 0.0,
                1e-6);
  }
  EXPECT_THROW(fisher_tippett_logpdf(std::nan(""), LooksCount(1)), std::invalid_argument);
}
