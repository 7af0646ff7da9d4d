// SPDX-License-Identifier: Apache-2.0
//
// Differentiation engine tests. Every analytic gradient is validated against
// a central finite-difference oracle with step 1e-5.

#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "manet/autodiff.hpp"
#include "manet/rng.hpp"

namespace {

using manet::Rng;
namespace ad = manet::ad;

constexpr double kFdStep = 1e-5;
constexpr double kRelTol = 1e-4;
constexpr double kAbsFloor = 1e-6;

// Builds a scalar loss from one flat parameter vector. The builder slices
// whatever sub-tensors it needs out of the single leaf.
using LossBuilder = std::function<ad::Tensor(ad::Tape&, ad::Tensor)>;

double eval_loss(const LossBuilder& build, const std::vector<double>& x) {
  ad::Tape tape;
  ad::Tensor p = tape.leaf(x, {static_cast<int>(x.size())});
  return build(tape, p).value();
}

void expect_matches_finite_differences(const LossBuilder& build,
                                       const std::vector<double>& x0) {
  ad::Tape tape;
  ad::Tensor p = tape.leaf(x0, {static_cast<int>(x0.size())});
  ad::Tensor loss = build(tape, p);
  ASSERT_TRUE(tape.topologically_ordered());
  tape.backward(loss);
  std::span<const double> analytic = p.grad();

  for (std::size_t i = 0; i < x0.size(); ++i) {
    std::vector<double> hi = x0, lo = x0;
    hi[i] += kFdStep;
    lo[i] -= kFdStep;
    const double numeric =
        (eval_loss(build, hi) - eval_loss(build, lo)) / (2.0 * kFdStep);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
    EXPECT_NEAR(analytic[i], numeric, std::max(kAbsFloor, kRelTol * scale))
        << "component " << i;
  }
}

std::vector<double> random_vector(std::size_t count, Rng& rng, double lo = -2.0,
                                  double hi = 2.0) {
  std::vector<double> v(count);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

ad::Tensor reshape(ad::Tape& t, ad::Tensor x, int rows, int cols) {
  return t.reshape(x, {rows, cols});
}

TEST(Fc, IdentityWeightsPassInputThrough) {
  ad::Tape tape;
  ad::Tensor w = tape.leaf({1.0, 0.0, 0.0, 1.0}, {2, 2});
  ad::Tensor b = tape.leaf({0.0, 0.0}, {2});
  ad::Tensor x = tape.leaf({3.0, -1.0}, {2});
  ad::Tensor y = tape.fc(w, b, x);
  EXPECT_EQ(y.values()[0], 3.0);
  EXPECT_EQ(y.values()[1], -1.0);
}

TEST(Fc, ZeroWeightsReturnBias) {
  ad::Tape tape;
  ad::Tensor w = tape.leaf({0.0, 0.0, 0.0}, {1, 3});
  ad::Tensor b = tape.leaf({5.0}, {1});
  ad::Tensor x = tape.leaf({9.0, -2.0, 0.5}, {3});
  EXPECT_EQ(tape.fc(w, b, x).values()[0], 5.0);
}

TEST(Fc, MatchesManualDotProduct) {
  Rng rng(42);
  const std::vector<double> w = random_vector(12, rng);
  const std::vector<double> b = random_vector(4, rng);
  const std::vector<double> x = random_vector(3, rng);

  ad::Tape tape;
  ad::Tensor y = tape.fc(tape.leaf(w, {4, 3}), tape.leaf(b, {4}),
                         tape.leaf(x, {3}));
  for (int o = 0; o < 4; ++o) {
    double expect = b[static_cast<std::size_t>(o)];
    for (int k = 0; k < 3; ++k)
      expect += w[static_cast<std::size_t>(o * 3 + k)] *
                x[static_cast<std::size_t>(k)];
    EXPECT_DOUBLE_EQ(y.values()[static_cast<std::size_t>(o)], expect);
  }
}

TEST(Fc, RejectsMismatchedShapes) {
  ad::Tape tape;
  ad::Tensor w = tape.leaf({1.0, 2.0}, {1, 2});
  ad::Tensor b = tape.leaf({0.0}, {1});
  ad::Tensor x3 = tape.leaf({1.0, 2.0, 3.0}, {3});
  EXPECT_THROW(tape.fc(w, b, x3), manet::DimensionError);
  ad::Tensor b2 = tape.leaf({0.0, 0.0}, {2});
  ad::Tensor x2 = tape.leaf({1.0, 2.0}, {2});
  EXPECT_THROW(tape.fc(w, b2, x2), manet::DimensionError);
}

TEST(Elementwise, ClosedFormValues) {
  ad::Tape tape;
  EXPECT_NEAR(tape.softplus(tape.scalar(0.0)).value(), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(tape.sigmoid(tape.scalar(0.0)).value(), 0.5);
  // relu(delta - x) vanishes exactly at the margin boundary x = delta.
  const double delta = 0.01;
  ad::Tensor x = tape.scalar(delta);
  ad::Tensor margin = tape.relu(tape.affine(x, -1.0, delta));
  EXPECT_EQ(margin.value(), 0.0);
}

TEST(Elementwise, SoftplusStaysFiniteForLargeInputs) {
  ad::Tape tape;
  EXPECT_NEAR(tape.softplus(tape.scalar(800.0)).value(), 800.0, 1e-12);
  EXPECT_NEAR(tape.softplus(tape.scalar(-800.0)).value(), 0.0, 1e-300);
}

TEST(Elementwise, LogRejectsNonPositive) {
  ad::Tape tape;
  EXPECT_THROW(tape.log(tape.scalar(0.0)), manet::DomainError);
  EXPECT_THROW(tape.log(tape.scalar(-1.0)), manet::DomainError);
}

TEST(Elementwise, BroadcastAgainstScalar) {
  ad::Tape tape;
  ad::Tensor v = tape.leaf({1.0, 2.0, 3.0}, {3});
  ad::Tensor s = tape.scalar(2.0);
  ad::Tensor prod = tape.mul(v, s);
  ad::Tensor quot = tape.div(v, s);
  EXPECT_EQ(prod.values()[2], 6.0);
  EXPECT_EQ(quot.values()[1], 1.0);
  EXPECT_THROW(tape.add(v, tape.leaf({1.0, 2.0}, {2})),
               manet::DimensionError);
}

TEST(LayerNorm, ConstantInputGivesShift) {
  ad::Tape tape;
  ad::Tensor x = tape.leaf({4.0, 4.0, 4.0}, {3});
  ad::Tensor gain = tape.leaf({1.0, 1.0, 1.0}, {3});
  ad::Tensor zero = tape.leaf({0.0, 0.0, 0.0}, {3});
  ad::Tensor y = tape.layer_norm(x, gain, zero);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);

  ad::Tensor shift = tape.leaf({2.5, 2.5, 2.5}, {3});
  ad::Tensor y2 = tape.layer_norm(x, gain, shift);
  for (double v : y2.values()) EXPECT_EQ(v, 2.5);
}

TEST(LayerNorm, UnitVarianceInputIsFixedPoint) {
  ad::Tape tape;
  ad::Tensor x = tape.leaf({1.0, -1.0}, {2});
  ad::Tensor gain = tape.leaf({1.0, 1.0}, {2});
  ad::Tensor shift = tape.leaf({0.0, 0.0}, {2});
  ad::Tensor y = tape.layer_norm(x, gain, shift, 1e-12);
  EXPECT_NEAR(y.values()[0], 1.0, 1e-9);
  EXPECT_NEAR(y.values()[1], -1.0, 1e-9);
}

TEST(Backward, SquareAndSoftplusExamples) {
  {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({3.0}, {1});
    ad::Tensor loss = tape.mul(x, x);
    tape.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  }
  {
    ad::Tape tape;
    ad::Tensor x = tape.leaf({0.0}, {1});
    ad::Tensor loss = tape.softplus(x);
    tape.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
  }
}

TEST(Backward, RequiresScalarLoss) {
  ad::Tape tape;
  ad::Tensor x = tape.leaf({1.0, 2.0}, {2});
  EXPECT_THROW(tape.backward(x), manet::ContractError);
}

TEST(Backward, GradBeforeBackwardThrows) {
  ad::Tape tape;
  ad::Tensor x = tape.leaf({1.0}, {1});
  EXPECT_THROW((void)x.grad(), manet::ContractError);
}

TEST(Backward, ThreeLayerCompositionMatchesFiniteDifferences) {
  // Parameter layout: W1 (3x2), b1 (3), W2 (3x3), b2 (3), W3 (1x3), b3 (1),
  // input (2). Total 24 values.
  LossBuilder build = [](ad::Tape& t, ad::Tensor p) {
    ad::Tensor w1 = t.slice(p, 0, 6);
    ad::Tensor b1 = t.slice(p, 6, 3);
    ad::Tensor w2 = t.slice(p, 9, 9);
    ad::Tensor b2 = t.slice(p, 18, 3);
    ad::Tensor w3 = t.slice(p, 21, 3);
    ad::Tensor b3 = t.slice(p, 24, 1);
    ad::Tensor x = t.slice(p, 25, 2);
    ad::Tensor h = t.fc(reshape(t, w1, 3, 2), b1, x);
    h = t.sigmoid(h);
    h = t.fc(reshape(t, w2, 3, 3), b2, h);
    h = t.softplus(h);
    h = t.fc(reshape(t, w3, 1, 3), b3, h);
    return t.sum(h);
  };
  Rng rng(7);
  expect_matches_finite_differences(build, random_vector(27, rng));
}

TEST(GradCheck, UnaryPrimitives) {
  Rng rng(11);
  const std::vector<double> x0 = random_vector(6, rng);

  auto check = [&](auto op) {
    LossBuilder build = [op](ad::Tape& t, ad::Tensor p) {
      return t.sum(op(t, p));
    };
    expect_matches_finite_differences(build, x0);
  };

  check([](ad::Tape& t, ad::Tensor p) { return t.sigmoid(p); });
  check([](ad::Tape& t, ad::Tensor p) { return t.softplus(p); });
  check([](ad::Tape& t, ad::Tensor p) { return t.exp(p); });
  check([](ad::Tape& t, ad::Tensor p) { return t.affine(p, -1.7, 0.3); });
  check([](ad::Tape& t, ad::Tensor p) { return t.mul(p, p); });
}

TEST(GradCheck, ReluAwayFromKink) {
  // Keep samples off the non-differentiable point so the finite-difference
  // oracle is valid.
  std::vector<double> x0 = {-1.9, -0.7, -0.2, 0.3, 1.1, 1.8};
  LossBuilder build = [](ad::Tape& t, ad::Tensor p) {
    return t.sum(t.relu(p));
  };
  expect_matches_finite_differences(build, x0);
}

TEST(GradCheck, LogSqrtDivOnPositiveInputs) {
  Rng rng(13);
  const std::vector<double> x0 = random_vector(5, rng, 0.2, 2.0);
  expect_matches_finite_differences(
      [](ad::Tape& t, ad::Tensor p) { return t.sum(t.log(p)); }, x0);
  expect_matches_finite_differences(
      [](ad::Tape& t, ad::Tensor p) { return t.sum(t.sqrt(p)); }, x0);
  expect_matches_finite_differences(
      [](ad::Tape& t, ad::Tensor p) {
        ad::Tensor num = t.slice(p, 0, 2);
        ad::Tensor den = t.slice(p, 2, 2);
        return t.sum(t.div(num, den));
      },
      x0);
}

TEST(GradCheck, ConcatIndexSliceSum) {
  Rng rng(17);
  const std::vector<double> x0 = random_vector(8, rng);
  LossBuilder build = [](ad::Tape& t, ad::Tensor p) {
    ad::Tensor a = t.slice(p, 0, 3);
    ad::Tensor b = t.slice(p, 3, 5);
    ad::Tensor joined = t.concat({t.sigmoid(a), t.softplus(b)});
    ad::Tensor first = t.index(joined, 0);
    return t.add(t.sum(joined), t.mul(first, first));
  };
  expect_matches_finite_differences(build, x0);
}

TEST(GradCheck, BroadcastBinaryOps) {
  Rng rng(19);
  const std::vector<double> x0 = random_vector(5, rng, 0.3, 2.0);
  LossBuilder build = [](ad::Tape& t, ad::Tensor p) {
    ad::Tensor vec = t.slice(p, 0, 4);
    ad::Tensor s = t.index(p, 4);
    ad::Tensor y = t.add(t.mul(vec, s), t.div(vec, s));
    return t.sum(t.sub(y, s));
  };
  expect_matches_finite_differences(build, x0);
}

TEST(GradCheck, FcPrimitive) {
  Rng rng(23);
  const std::vector<double> x0 = random_vector(4 * 3 + 4 + 3, rng);
  LossBuilder build = [](ad::Tape& t, ad::Tensor p) {
    ad::Tensor w = reshape(t, t.slice(p, 0, 12), 4, 3);
    ad::Tensor b = t.slice(p, 12, 4);
    ad::Tensor x = t.slice(p, 16, 3);
    return t.sum(t.sigmoid(t.fc(w, b, x)));
  };
  expect_matches_finite_differences(build, x0);
}

TEST(GradCheck, LayerNormPrimitive) {
  Rng rng(29);
  const std::vector<double> x0 = random_vector(12, rng);
  LossBuilder build = [](ad::Tape& t, ad::Tensor p) {
    ad::Tensor x = t.slice(p, 0, 4);
    ad::Tensor gain = t.slice(p, 4, 4);
    ad::Tensor shift = t.slice(p, 8, 4);
    ad::Tensor y = t.layer_norm(x, gain, shift);
    return t.sum(t.mul(y, y));
  };
  expect_matches_finite_differences(build, x0);
}

TEST(Tape, ForwardIsDeterministic) {
  auto run = [] {
    Rng rng(31);
    ad::Tape tape;
    ad::Tensor w = tape.leaf(random_vector(6, rng), {2, 3});
    ad::Tensor b = tape.leaf(random_vector(2, rng), {2});
    ad::Tensor x = tape.leaf(random_vector(3, rng), {3});
    ad::Tensor y = tape.softplus(tape.fc(w, b, x));
    return std::vector<double>(y.values().begin(), y.values().end());
  };
  const std::vector<double> a = run();
  const std::vector<double> b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Tape, ResetReusesCleanly) {
  ad::Tape tape;
  (void)tape.softplus(tape.scalar(1.0));
  EXPECT_GT(tape.node_count(), 0u);
  tape.reset();
  EXPECT_EQ(tape.node_count(), 0u);
  ad::Tensor x = tape.leaf({2.0}, {1});
  ad::Tensor loss = tape.mul(x, x);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(Tape, ConstantsDoNotReceiveGradients) {
  ad::Tape tape;
  ad::Tensor x = tape.leaf({1.5}, {1});
  ad::Tensor c = tape.scalar(3.0);
  ad::Tensor loss = tape.mul(x, c);
  EXPECT_FALSE(c.requires_grad());
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

}  // namespace
