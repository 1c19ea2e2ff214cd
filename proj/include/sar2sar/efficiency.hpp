#pragma once

// Monte Carlo comparison of the two M-estimators of a constant
// log-reflectivity from N log-intensity samples:
//   l2 (debiased):  mean(y) - (psi(L) - log L)
//   likelihood:     log(mean(exp(y)))
// Both are the exact minimisers of the corresponding summed losses.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "sar2sar/rng.hpp"
#include "sar2sar/speckle.hpp"

namespace sar2sar {

struct EfficiencyCurve {
  std::vector<int> sample_counts;
  std::vector<double> rmse_l2;
  std::vector<double> rmse_lik;
  std::vector<double> stderr_l2;
  std::vector<double> stderr_lik;
  int trials = 0;
  LooksCount looks{1.0};
  std::uint64_t seed = 0;
};

inline const std::vector<int> &default_sample_counts() {
  static const std::vector<int> counts{1, 2, 5, 10, 20, 50, 100, 200};
  return counts;
}

inline double l2_estimate(std::span<const double> log_samples, LooksCount looks) {
  double sum = 0.0;
  for (double y : log_samples)
    sum += y;
  return sum / static_cast<double>(log_samples.size()) - log_speckle_bias(looks);
}

/// log-mean-exp, shifted by the maximum for stability.
inline double likelihood_estimate(std::span<const double> log_samples) {
  double m = log_samples[0];
  for (double y : log_samples)
    m = std::max(m, y);
  double sum = 0.0;
  for (double y : log_samples)
    sum += std::exp(y - m);
  return m + std::log(sum / static_cast<double>(log_samples.size()));
}

inline EfficiencyCurve run_efficiency_experiment(double x_true, LooksCount looks,
                                                 const std::vector<int> &sample_counts,
                                                 int trials, const Rng &rng) {
  if (trials < 1000)
    throw std::invalid_argument("efficiency experiment needs at least 1000 trials");
  if (sample_counts.empty())
    throw std::invalid_argument("efficiency experiment needs at least one sample count");
  for (int n : sample_counts)
    if (n < 1)
      throw std::invalid_argument("sample counts must be positive");

  EfficiencyCurve curve;
  curve.sample_counts = sample_counts;
  curve.trials = trials;
  curve.looks = looks;
  curve.seed = rng.seed();

  std::vector<double> samples;
  for (std::size_t ni = 0; ni < sample_counts.size(); ++ni) {
    const int n = sample_counts[ni];
    samples.resize(static_cast<std::size_t>(n));
    const Rng count_stream = rng.derive(static_cast<std::uint64_t>(n));
    // Squared errors: running sums of e^2 and e^4 for the standard errors.
    double s2_l2 = 0.0, s4_l2 = 0.0, s2_lik = 0.0, s4_lik = 0.0;
    for (int t = 0; t < trials; ++t) {
      Rng trial_rng = count_stream.derive(static_cast<std::uint64_t>(t));
      const SpeckleField s = sample_speckle(n, 1, looks, trial_rng);
      for (int k = 0; k < n; ++k)
        samples[k] = x_true + std::log(s.values[k]);
      const double e_l2 = l2_estimate(samples, looks) - x_true;
      const double e_lik = likelihood_estimate(samples) - x_true;
      s2_l2 += e_l2 * e_l2;
      s4_l2 += e_l2 * e_l2 * e_l2 * e_l2;
      s2_lik += e_lik * e_lik;
      s4_lik += e_lik * e_lik * e_lik * e_lik;
    }
    // RMSE = sqrt(MSE); delta method: se(RMSE) = se(MSE) / (2 RMSE).
    const auto summarize = [trials](double s2, double s4, double &rmse, double &se) {
      const double mse = s2 / trials;
      const double var_sq = std::max(0.0, s4 / trials - mse * mse);
      rmse = std::sqrt(mse);
      se = rmse > 0.0 ? std::sqrt(var_sq / trials) / (2.0 * rmse) : 0.0;
    };
    double r, se;
    summarize(s2_l2, s4_l2, r, se);
    curve.rmse_l2.push_back(r);
    curve.stderr_l2.push_back(se);
    summarize(s2_lik, s4_lik, r, se);
    curve.rmse_lik.push_back(r);
    curve.stderr_lik.push_back(se);
  }
  return curve;
}

/// CSV with header `N,rmse_l2,rmse_lik,stderr_l2,stderr_lik`.
inline void write_efficiency_csv(std::ostream &os, const EfficiencyCurve &c) {
  os << "N,rmse_l2,rmse_lik,stderr_l2,stderr_lik\n";
  char line[256];
  for (std::size_t i = 0; i < c.sample_counts.size(); ++i) {
    std::snprintf(line, sizeof line, "%d,%.12g,%.12g,%.12g,%.12g\n", c.sample_counts[i],
                  c.rmse_l2[i], c.rmse_lik[i], c.stderr_l2[i], c.stderr_lik[i]);
    os << line;
  }
}

} // namespace sar2sar
