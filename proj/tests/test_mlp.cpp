#include <gtest/gtest.h>

#include <cmath>

#include "cdt/mlp.hpp"
#include "cdt/parameters.hpp"

using namespace cdt;

TEST(Mlp, ForwardMatchesHandComputation) {
  Mlp<double> m;
  m.layers.push_back({2, 2, {0.5, -1.0, 2.0, 0.25}, {0.1, -0.2}});
  m.layers.push_back({2, 1, {1.5, -0.5}, {0.3}});
  const std::vector<double> x{0.4, -0.8};
  const double h0 = std::tanh(0.1 + 0.5 * 0.4 + -1.0 * -0.8);
  const double h1 = std::tanh(-0.2 + 2.0 * 0.4 + 0.25 * -0.8);
  const auto y = forward(m, std::span<const double>(x));
  ASSERT_EQ(y.size(), 1u);
  EXPECT_NEAR(y[0], 0.3 + 1.5 * h0 - 0.5 * h1, 1e-15);
}

TEST(Mlp, ShapesAndCounts) {
  Rng rng(1);
  const auto policy = make_policy_mlp(4, 128, 2, rng);
  EXPECT_EQ(param_count(policy), 4u * 128 + 128 + 128 * 2 + 2);
  const auto value = make_value_net(2, 32, rng);
  EXPECT_EQ(value.outputs(), 1u);
  EXPECT_EQ(flatten(value).size(), param_count(value));
  EXPECT_THROW(make_mlp({4}, rng), std::invalid_argument);
  EXPECT_THROW(make_mlp({4, 0, 1}, rng), std::invalid_argument);
  const std::vector<double> bad{1.0};
  EXPECT_THROW(forward(policy, std::span<const double>(bad)), std::invalid_argument);
}

TEST(Mlp, PolicyOutputIsADistribution) {
  Rng rng(2);
  const auto policy = make_policy_mlp(4, 16, 3, rng);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x{uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3)};
    const auto p = predict_soft(policy, std::span<const double>(x));
    double s = 0.0;
    for (double v : p) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mlp, ValueOutputFiniteForLargeInputs) {
  Rng rng(3);
  const auto value = make_value_net(4, 32, rng);
  const std::vector<double> x{1e6, -1e6, 1e12, -3e9};
  EXPECT_TRUE(std::isfinite(forward(value, std::span<const double>(x))[0]));
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Mlp<double> m = make_mlp({3, 5, 4, 2}, rng);
  const std::vector<double> x{0.3, -1.2, 0.7};
  auto loss = [&](const Mlp<double>& mm) {
    const auto p = predict_soft(mm, std::span<const double>(x));
    return -std::log(p[1]);
  };
  Tape tape;
  const auto lifted = lift(m, tape);
  const auto p = predict_soft(lifted, std::span<const double>(x));
  const Var l = -log(p[1]);
  EXPECT_NEAR(l.value, loss(m), 1e-14);
  const auto grad = gradient_of(lifted, tape.backward(l));
  auto params = flatten(m);
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto plus = params;
    auto minus = params;
    plus[i] += h;
    minus[i] -= h;
    Mlp<double> mp = m;
    Mlp<double> mm = m;
    assign(mp, std::span<const double>(plus));
    assign(mm, std::span<const double>(minus));
    const double fd = (loss(mp) - loss(mm)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-6 + 1e-5 * std::abs(fd)) << "param " << i;
  }
}

TEST(Mlp, SameSeedSameWeights) {
  Rng a(9);
  Rng b(9);
  EXPECT_EQ(flatten(make_value_net(4, 8, a)), flatten(make_value_net(4, 8, b)));
}
