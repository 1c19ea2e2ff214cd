#include <cmath>

#include <gtest/gtest.h>

#include "sar2sar/adam.hpp"

using namespace sar2sar;

namespace {

NetworkConfig tiny() {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.channels = {2};
  return cfg;
}

} // namespace

TEST(LearningRateSchedule, StepDecay) {
  const LearningRateSchedule s;
  for (int e = 1; e <= 5; ++e)
    EXPECT_DOUBLE_EQ(s.at(e), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(6), 1e-4);
  EXPECT_DOUBLE_EQ(s.at(10), 1e-4);
  EXPECT_DOUBLE_EQ(s.at(11), 1e-5);
  EXPECT_DOUBLE_EQ(s.at(30), 1e-5);
}

TEST(AdamStep, FirstStepMovesByLearningRateAgainstGradientSign) {
  Rng rng(1);
  auto p = NetworkParams<double>::initialized(tiny(), rng);
  const auto before = p;
  auto g = p.zeros_like();
  for (auto &l : g.layers())
    for (auto &v : l.weight)
      v = rng.normal();
  auto state = AdamState<double>::for_params(p);
  adam_step(state, p, g, 1);
  for (std::size_t i = 0; i < p.layers().size(); ++i)
    for (std::size_t k = 0; k < p.layer(i).weight.size(); ++k) {
      const double step = p.layer(i).weight[k] - before.layer(i).weight[k];
      const double gk = g.layer(i).weight[k];
      EXPECT_NEAR(step, -1e-3 * gk / (std::abs(gk) + 1e-8), 1e-12);
    }
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamStep, ScheduledLearningRate) {
  Rng rng(2);
  auto p = NetworkParams<double>::initialized(tiny(), rng);
  auto g = p.zeros_like();
  g.layer(0).weight[0] = 3.0;
  for (int epoch : {6, 11}) {
    auto q = p;
    auto state = AdamState<double>::for_params(q);
    adam_step(state, q, g, epoch);
    EXPECT_NEAR(p.layer(0).weight[0] - q.layer(0).weight[0], epoch == 6 ? 1e-4 : 1e-5, 1e-11);
  }
}

TEST(AdamStep, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(3);
  auto p = NetworkParams<double>::initialized(tiny(), rng);
  const auto before = p;
  auto state = AdamState<double>::for_params(p);
  adam_step(state, p, p.zeros_like(), 1);
  for (std::size_t i = 0; i < p.layers().size(); ++i)
    EXPECT_EQ(p.layer(i).weight, before.layer(i).weight);
  EXPECT_GT(p.revision(), before.revision());
}

TEST(AdamStep, NonFiniteGradientFailsLoudly) {
  Rng rng(4);
  auto p = NetworkParams<float>::initialized(tiny(), rng);
  const auto before = p;
  auto g = p.zeros_like();
  g.layer(1).bias[0] = std::numeric_limits<float>::quiet_NaN();
  auto state = AdamState<float>::for_params(p);
  EXPECT_THROW(adam_step(state, p, g, 1), NumericError);
  EXPECT_EQ(state.step, 0u);
  EXPECT_EQ(p.layer(0).weight, before.layer(0).weight);
}

TEST(AdamStep, ShapeMismatch) {
  NetworkParams<double> a(tiny());
  NetworkConfig other = tiny();
  other.channels = {3};
  NetworkParams<double> g(other);
  auto state = AdamState<double>::for_params(a);
  EXPECT_THROW(adam_step(state, a, g, 1), ShapeError);
}

TEST(AdamStep, MinimizesQuadratic) {
  // Drive every parameter towards 0.5 on 0.5*|p - 0.5|^2.
  Rng rng(5);
  auto p = NetworkParams<double>::initialized(tiny(), rng);
  auto state = AdamState<double>::for_params(p, LearningRateSchedule{0.05, {}});
  for (int it = 0; it < 2000; ++it) {
    auto g = p.zeros_like();
    for (std::size_t i = 0; i < p.layers().size(); ++i)
      for (std::size_t k = 0; k < p.layer(i).weight.size(); ++k)
        g.layer(i).weight[k] = p.layer(i).weight[k] - 0.5;
    adam_step(state, p, g, 1);
  }
  for (const auto &l : p.layers())
    for (double w : l.weight)
      EXPECT_NEAR(w, 0.5, 1e-3);
}
