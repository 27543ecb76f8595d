#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "spml/losses.hpp"
#include "spml/model.hpp"

namespace spml {
namespace {

TEST(InitModel, DeterministicInSeed) {
  EXPECT_EQ(init_model(3, 4, 2, 7), init_model(3, 4, 2, 7));
  EXPECT_NE(init_model(3, 4, 2, 7), init_model(3, 4, 2, 8));
}

TEST(InitModel, BiasesStartAtZero) {
  const MlpModel m = init_model(3, 4, 2, 7);
  EXPECT_EQ(m.b1, std::vector<double>(4, 0.0));
  EXPECT_EQ(m.b2, std::vector<double>(2, 0.0));
}

TEST(InitModel, WeightsRespectGlorotBound) {
  const MlpModel m = init_model(8, 16, 5, 1);
  const double bound1 = std::sqrt(6.0 / 24.0);  // = 0.5
  const double bound2 = std::sqrt(6.0 / 21.0);
  for (double v : m.w1.flat()) EXPECT_LE(std::abs(v), bound1);
  for (double v : m.w2.flat()) EXPECT_LE(std::abs(v), bound2);
  EXPECT_EQ(m.w1.rows(), 8u);
  EXPECT_EQ(m.w1.cols(), 16u);
  EXPECT_EQ(m.w2.rows(), 16u);
  EXPECT_EQ(m.w2.cols(), 5u);
}

TEST(InitModel, RejectsNonPositiveDimensions) {
  EXPECT_THROW(init_model(0, 4, 2, 1), DimensionError);
  EXPECT_THROW(init_model(3, -1, 2, 1), DimensionError);
  EXPECT_THROW(init_model(3, 4, 0, 1), DimensionError);
}

TEST(Forward, ZeroModelGivesOneHalf) {
  MlpModel m = init_model(3, 4, 2, 1);
  for (double& v : m.w1.flat()) v = 0.0;
  for (double& v : m.w2.flat()) v = 0.0;
  std::mt19937_64 rng(3);
  const RealMatrix p = forward(m, test::random_matrix(5, 3, rng, 10.0));
  for (double v : p.flat()) EXPECT_EQ(v, 0.5);
}

TEST(Forward, HandEvaluatedComposition) {
  MlpModel m = init_model(1, 1, 1, 0);
  m.w1(0, 0) = 1.0;
  m.w2(0, 0) = 1.0;
  RealMatrix x(1, 1, 2.0);
  EXPECT_NEAR(forward(m, x)(0, 0), 0.8807970779778823, 1e-15);
  x(0, 0) = -2.0;  // ReLU zeroes the hidden unit
  EXPECT_EQ(forward(m, x)(0, 0), 0.5);
}

TEST(Forward, OutputsAreClamped) {
  MlpModel m = init_model(2, 3, 2, 5);
  for (double& v : m.w1.flat()) v = 50.0;
  for (double& v : m.w2.flat()) v = 50.0;
  m.w2(0, 1) = -50.0;
  m.w2(1, 1) = -50.0;
  m.w2(2, 1) = -50.0;
  const RealMatrix p = forward(m, RealMatrix(4, 2, 3.0));
  for (std::size_t n = 0; n < 4; ++n) {
    EXPECT_EQ(p(n, 0), 1.0 - kProbEpsilon);
    EXPECT_EQ(p(n, 1), kProbEpsilon);
  }
}

TEST(Forward, RejectsBadInput) {
  const MlpModel m = init_model(3, 4, 2, 1);
  EXPECT_THROW(forward(m, RealMatrix(2, 4)), DimensionError);
  RealMatrix x(2, 3);
  x(1, 2) = std::nan("");
  EXPECT_THROW(forward(m, x), InputError);
  x(1, 2) = INFINITY;
  EXPECT_THROW(forward(m, x), InputError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const MlpModel m = test::random_model(4, 6, 3, 2);
  std::mt19937_64 rng(1);
  const RealMatrix x = test::random_matrix(5, 4, rng);
  const auto cache = forward_cached(m, x);
  const ParamSet g = backward(m, x, cache, RealMatrix(5, 3));
  for (double v : test::flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MatchesFiniteDifferencesForBce) {
  std::mt19937_64 rng(11);
  const MlpModel m = test::random_model(8, 16, 5, 4);
  const RealMatrix x = test::random_matrix(4, 8, rng);
  BinaryMatrix y(4, 5);
  for (auto& v : y.flat()) v = rng() & 1;
  const auto cache = forward_cached(m, x);
  const ParamSet g = backward(m, x, cache, bce_full(cache.probs, y).dlogits);
  const auto numeric = test::numeric_gradient(m, x, [&](const RealMatrix& p) { return bce_full(p, y).value; });
  EXPECT_LT(test::max_relative_error(test::flatten(g), numeric), 1e-4);
}

TEST(Backward, ReluGradientAtExactZeroIsZero) {
  MlpModel m = init_model(1, 1, 1, 0);
  m.w1(0, 0) = 1.0;
  m.w2(0, 0) = 1.0;
  const RealMatrix x(1, 1, 0.0);  // hidden pre-activation is exactly 0
  const auto cache = forward_cached(m, x);
  const ParamSet g = backward(m, x, cache, RealMatrix(1, 1, 1.0));
  EXPECT_EQ(g.b1[0], 0.0);
  EXPECT_EQ(g.w1(0, 0), 0.0);
  EXPECT_EQ(g.b2[0], 1.0);
}

TEST(Backward, DuplicatedExamplesLeaveMeanGradientUnchanged) {
  std::mt19937_64 rng(5);
  const MlpModel m = test::random_model(8, 16, 5, 9);
  const RealMatrix ab = test::random_matrix(2, 8, rng);
  BinaryMatrix yab(2, 5);
  for (auto& v : yab.flat()) v = rng() & 1;
  const std::vector<std::size_t> dup{0, 0, 1, 1};
  const RealMatrix aabb = gather_rows(ab, std::span<const std::size_t>(dup));
  const BinaryMatrix yaabb = gather_rows(yab, std::span<const std::size_t>(dup));

  auto grad = [&](const RealMatrix& x, const BinaryMatrix& y) {
    const auto cache = forward_cached(m, x);
    return test::flatten(backward(m, x, cache, bce_full(cache.probs, y).dlogits));
  };
  const auto g1 = grad(ab, yab), g2 = grad(aabb, yaabb);
  ASSERT_EQ(g1.size(), g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-15 + 1e-13 * std::abs(g1[i]));
}

TEST(Backward, RejectsShapeMismatch) {
  const MlpModel m = init_model(3, 4, 2, 1);
  const RealMatrix x(2, 3);
  const auto cache = forward_cached(m, x);
  EXPECT_THROW(backward(m, x, cache, RealMatrix(2, 3)), DimensionError);
  EXPECT_THROW(backward(m, x, cache, RealMatrix(3, 2)), DimensionError);
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  MlpModel m = test::random_model(3, 4, 2, 3);
  const MlpModel before = m;
  OptimizerState s = make_optimizer(m, 0.01);
  optimizer_step(m, zeros_like(m), s);
  EXPECT_EQ(m, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Optimizer, FirstStepMovesByLearningRateInGradientSign) {
  MlpModel m = test::random_model(3, 4, 2, 3);
  const MlpModel before = m;
  ParamSet g = zeros_like(m);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> dist(0.0, 1.0);
  for_each_block(g, [&](std::span<double> block) {
    for (double& v : block) v = dist(rng);
  });
  g.b2[0] = 1e-9;  // small enough for eps to matter
  const double lr = 0.01;
  OptimizerState s = make_optimizer(m, lr);
  optimizer_step(m, g, s);

  // t = 1: m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + 1e-8).
  const auto p0 = test::flatten(before), p1 = test::flatten(m), gf = test::flatten(g);
  for (std::size_t i = 0; i < gf.size(); ++i) {
    const double expected = -lr * gf[i] / (std::abs(gf[i]) + 1e-8);
    EXPECT_NEAR(p1[i] - p0[i], expected, 1e-15);
  }
}

TEST(Optimizer, DeterministicAndShapeChecked) {
  MlpModel a = test::random_model(3, 4, 2, 3), b = a;
  ParamSet g = test::random_model(3, 4, 2, 99);
  OptimizerState sa = make_optimizer(a, 0.01), sb = make_optimizer(b, 0.01);
  for (int i = 0; i < 3; ++i) {
    optimizer_step(a, g, sa);
    optimizer_step(b, g, sb);
  }
  EXPECT_EQ(a, b);
  EXPECT_EQ(sa.first_moment, sb.first_moment);

  const ParamSet wrong = zeros_like(init_model(3, 5, 2, 0));
  EXPECT_THROW(optimizer_step(a, wrong, sa), DimensionError);
}

TEST(Optimizer, NonFiniteGradientAborts) {
  MlpModel m = init_model(3, 4, 2, 3);
  ParamSet g = zeros_like(m);
  g.w2(1, 1) = std::nan("");
  OptimizerState s = make_optimizer(m, 0.01);
  EXPECT_THROW(optimizer_step(m, g, s), TrainingError);
  EXPECT_THROW(make_optimizer(m, 0.0), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  MlpModel m = test::random_model(5, 7, 3, 21);
  m.w1(0, 0) = 1.0 / 3.0;
  m.w2(2, 1) = -4.9406564584124654e-324;  // smallest subnormal
  m.b2[2] = 1e300;
  std::stringstream ss;
  write_checkpoint(ss, m);
  EXPECT_EQ(read_checkpoint(ss), m);
}

TEST(Checkpoint, RejectsMalformedFiles) {
  std::stringstream bad_magic("spml-model v1 D=1 H=1 L=1\n");
  EXPECT_THROW(read_checkpoint(bad_magic), ParseError);

  std::stringstream ss;
  write_checkpoint(ss, init_model(2, 2, 2, 1));
  std::string text = ss.str();
  std::stringstream truncated(text.substr(0, text.rfind("b2")));
  EXPECT_THROW(read_checkpoint(truncated), ParseError);

  std::stringstream short_row("spml-checkpoint v1 D=1 H=2 L=1\nw1 0.5\n");
  try {
    read_checkpoint(short_row, "m.ckpt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

}  // namespace
}  // namespace spml
