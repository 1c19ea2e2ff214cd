#include <cmath>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "sar2sar/network.hpp"

using namespace sar2sar;
using sar2sar::testing::check_network_gradients;
using sar2sar::testing::random_network;
using sar2sar::testing::random_tensor;

TEST(NetworkConfig, DefaultIsDeskScale) {
  const NetworkConfig cfg;
  NetworkParams<float> p(cfg);
  EXPECT_EQ(cfg.depth, 2);
  EXPECT_EQ(cfg.size_divisor(), 4);
  // 62k parameters: the desk-scale budget.
  EXPECT_GT(p.num_parameters(), 40000u);
  EXPECT_LT(p.num_parameters(), 70000u);
  EXPECT_EQ(p.layers().size(), 10u);
}

TEST(NetworkConfig, SkipConcatenationChannelCounts) {
  NetworkConfig cfg;
  cfg.depth = 3;
  cfg.channels = {8, 12, 20};
  NetworkParams<double> p(cfg);
  EXPECT_EQ(p.find("enc0.conv0")->in_channels, 1);
  EXPECT_EQ(p.find("enc2.conv0")->in_channels, 12);
  EXPECT_EQ(p.find("bottleneck.conv0")->in_channels, 20);
  EXPECT_EQ(p.find("dec2.conv0")->in_channels, 20 + 20);
  EXPECT_EQ(p.find("dec1.conv0")->in_channels, 20 + 12);
  EXPECT_EQ(p.find("dec0.conv0")->in_channels, 12 + 8);
  EXPECT_EQ(p.find("out.conv")->in_channels, 8);
  EXPECT_EQ(p.find("out.conv")->out_channels, 1);
}

TEST(NetworkConfig, Validation) {
  NetworkConfig cfg;
  cfg.channels = {16};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = NetworkConfig{};
  cfg.kernel_size = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = NetworkConfig{};
  cfg.depth = 0;
  cfg.channels = {};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Forward, ZeroParamsIsIdentity) {
  NetworkParams<float> p{NetworkConfig{}};
  Rng rng(1);
  Tensor<float> x(2, 1, 32, 32);
  for (auto &v : x.values())
    v = static_cast<float>(rng.normal());
  EXPECT_EQ(forward(p, x), x);
}

TEST(Forward, InitializedNetworkStartsAsIdentity) {
  Rng rng(2);
  const auto p = NetworkParams<float>::initialized(NetworkConfig{}, rng);
  Tensor<float> x(1, 1, 16, 16);
  for (auto &v : x.values())
    v = static_cast<float>(rng.normal());
  EXPECT_EQ(forward(p, x), x);
}

TEST(Forward, ShapePreservedAndDeterministic) {
  Rng rng(3);
  const auto p = random_network(NetworkConfig{}, rng).cast<float>();
  for (int s : {32, 64, 128}) {
    Tensor<float> x(1, 1, s, s);
    for (auto &v : x.values())
      v = static_cast<float>(rng.normal());
    const auto a = forward(p, x);
    const auto b = forward(p, x);
    EXPECT_TRUE(a.same_shape(x)) << s;
    EXPECT_EQ(a, b);
    EXPECT_NE(a, x);
  }
  Tensor<float> rect(1, 1, 16, 40);
  EXPECT_TRUE(forward(p, rect).same_shape(rect));
}

TEST(Forward, RejectsIndivisibleOrTinyInput) {
  NetworkParams<double> p{NetworkConfig{}};
  EXPECT_THROW(forward(p, Tensor<double>(1, 1, 30, 32)), ShapeError);
  EXPECT_THROW(forward(p, Tensor<double>(1, 1, 4, 4)), ShapeError);
  EXPECT_THROW(forward(p, Tensor<double>(1, 2, 8, 8)), ShapeError);
}

TEST(Backward, FiniteDifferenceCheckTinyNet) {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.channels = {4};
  Rng rng(4);
  const auto p = random_network(cfg, rng);
  const auto x = random_tensor(1, 8, 8, rng);
  const auto y = random_tensor(1, 8, 8, rng);
  const auto r = check_network_gradients(p, x, y, LossKind::likelihood, LooksCount(1), 1e-4);
  EXPECT_EQ(r.checked, p.num_parameters());
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Backward, FiniteDifferenceCheckDepthTwoBatch) {
  NetworkConfig cfg;
  cfg.depth = 2;
  cfg.channels = {3, 5};
  Rng rng(5);
  const auto p = random_network(cfg, rng);
  const auto x = random_tensor(2, 8, 12, rng);
  const auto y = random_tensor(2, 8, 12, rng);
  const auto r = check_network_gradients(p, x, y, LossKind::l2_debiased, LooksCount(1), 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Backward, ZeroLossGradientGivesZeroParameterGradients) {
  Rng rng(6);
  auto p = random_network(NetworkConfig{}, rng);
  const auto x = random_tensor(1, 16, 16, rng);
  ForwardCache<double> cache;
  forward(p, x, &cache);
  const auto g = backward(p, cache, Tensor<double>(1, 1, 16, 16, 0.0));
  for (const auto &l : g.layers()) {
    for (double v : l.weight)
      EXPECT_EQ(v, 0.0);
    for (double v : l.bias)
      EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, OutputBiasGradientIsMinusSumOfLossGradient) {
  // despeckled = input - raw, raw = ... + b_out, so dL/db_out = -sum(dL/dout).
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.channels = {2};
  Rng rng(7);
  auto p = random_network(cfg, rng);
  const auto x = random_tensor(1, 4, 4, rng);
  ForwardCache<double> cache;
  forward(p, x, &cache);
  Tensor<double> g(1, 1, 4, 4);
  double sum = 0;
  for (auto &v : g.values()) {
    v = rng.normal();
    sum += v;
  }
  const auto grads = backward(p, cache, g);
  EXPECT_NEAR(grads.layer(p.out_index()).bias[0], -sum, 1e-12);
}

TEST(Backward, ConstantLayerBiasTwoByTwo) {
  // With all weights zero, the hidden activations equal leaky(bias), and the
  // output is the constant b_out on a 2x2 patch: its bias gradient sums the
  // incoming gradient (with the residual sign).
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.channels = {1};
  cfg.kernel_size = 1;
  NetworkParams<double> p(cfg);
  p.layer(p.out_index()).bias[0] = 0.3;
  Tensor<double> x(1, 1, 2, 2, 0.5);
  ForwardCache<double> cache;
  const auto out = forward(p, x, &cache);
  for (double v : out.values())
    EXPECT_DOUBLE_EQ(v, 0.5 - 0.3);
  Tensor<double> g(1, 1, 2, 2);
  g[0] = 1.0;
  g[1] = -2.0;
  g[2] = 0.25;
  g[3] = 4.0;
  const auto grads = backward(p, cache, g);
  EXPECT_DOUBLE_EQ(grads.layer(p.out_index()).bias[0], -(1.0 - 2.0 + 0.25 + 4.0));
}

TEST(Backward, StaleCacheRejected) {
  Rng rng(8);
  auto p = random_network(NetworkConfig{}, rng);
  const auto x = random_tensor(1, 16, 16, rng);
  ForwardCache<double> cache;
  forward(p, x, &cache);
  p.touch();
  EXPECT_THROW(backward(p, cache, Tensor<double>(1, 1, 16, 16)), std::logic_error);
  forward(p, x, &cache);
  EXPECT_THROW(backward(p, cache, Tensor<double>(1, 1, 8, 8)), ShapeError);
}

TEST(Network, ResultsIndependentOfHeapPlacement) {
  NetworkConfig cfg;
  cfg.channels = {4, 8};
  Rng rng(77);
  const auto p = sar2sar::testing::random_network(cfg, rng).cast<float>();
  Tensor<float> x(2, 1, 32, 32);
  for (auto &v : x.values())
    v = static_cast<float>(rng.normal());
  Tensor<float> g(2, 1, 32, 32, 0.01f);
  ForwardCache<float> c0;
  const auto out0 = forward(p, x, &c0);
  const auto grad0 = backward(p, c0, g);
  std::vector<std::vector<char>> junk;
  for (int trial = 1; trial < 8; ++trial) {
    junk.emplace_back(static_cast<std::size_t>(trial * 20 + 4));
    const Tensor<float> xc = x;
    ForwardCache<float> c;
    EXPECT_EQ(forward(p, xc, &c), out0);
    const auto grad = backward(p, c, g);
    for (std::size_t i = 0; i < grad.layers().size(); ++i) {
      EXPECT_EQ(grad.layer(i).weight, grad0.layer(i).weight);
      EXPECT_EQ(grad.layer(i).bias, grad0.layer(i).bias);
    }
  }
}
