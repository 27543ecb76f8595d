#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spml/losses.hpp"

namespace spml {
namespace {

RealMatrix probs_from(std::initializer_list<std::initializer_list<double>> rows) {
  RealMatrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

RealMatrix random_probs(std::size_t b, std::size_t l, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> logit(-4.0, 4.0);
  RealMatrix p(b, l);
  for (double& v : p.flat()) v = clamp_prob(sigmoid(logit(rng)));
  return p;
}

std::vector<std::size_t> random_observed(std::size_t b, std::size_t l, std::mt19937_64& rng) {
  std::vector<std::size_t> obs(b);
  for (auto& o : obs) o = rng() % l;
  return obs;
}

TEST(BceFull, MidpointIsLn2) {
  BinaryMatrix y(1, 2);
  y(0, 0) = 1;
  const auto out = bce_full(probs_from({{0.5, 0.5}}), y);
  EXPECT_NEAR(out.value, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(out.dlogits(0, 0), -0.25);
  EXPECT_DOUBLE_EQ(out.dlogits(0, 1), 0.25);
}

TEST(BceFull, PerfectPredictionIsNearZero) {
  BinaryMatrix y(2, 2);
  y(0, 0) = 1;
  y(1, 1) = 1;
  const double hi = 1.0 - kProbEpsilon, lo = kProbEpsilon;
  const auto out = bce_full(probs_from({{hi, lo}, {lo, hi}}), y);
  EXPECT_GE(out.value, 0.0);
  EXPECT_LE(out.value, 1e-6);
}

TEST(BceFull, MatchesPerEntrySummation) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng() % 9, l = 1 + rng() % 7;
    const RealMatrix p = random_probs(b, l, rng);
    BinaryMatrix y(b, l);
    for (auto& v : y.flat()) v = rng() & 1;
    double total = 0.0;
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t k = 0; k < l; ++k) {
        total += y(n, k) * std::log(p(n, k)) + (1 - y(n, k)) * std::log(1.0 - p(n, k));
      }
    }
    const auto out = bce_full(p, y);
    EXPECT_NEAR(out.value, -total / static_cast<double>(b * l), 1e-12);
    EXPECT_GE(out.value, 0.0);
  }
}

TEST(BceFull, RejectsShapeMismatch) {
  EXPECT_THROW(bce_full(RealMatrix(2, 3, 0.5), BinaryMatrix(2, 2)), DimensionError);
}

TEST(AnLoss, ReducesToBceMidpoint) {
  const std::vector<std::size_t> obs{0};
  EXPECT_NEAR(an_loss(probs_from({{0.5, 0.5}}), obs).value, std::log(2.0), 1e-15);
}

TEST(AnLoss, IdenticalToBceOnExpandedLabels) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng() % 8, l = 1 + rng() % 6;
    const RealMatrix p = random_probs(b, l, rng);
    const auto obs = random_observed(b, l, rng);
    const auto a = an_loss(p, obs);
    const auto f = bce_full(p, expand_assume_negative(obs, l));
    EXPECT_EQ(a.value, f.value);
    EXPECT_EQ(a.dlogits, f.dlogits);
  }
}

TEST(AnLoss, ConsistentPerfectPredictionIsNearZero) {
  const double hi = 1.0 - kProbEpsilon, lo = kProbEpsilon;
  const std::vector<std::size_t> obs{1};
  EXPECT_LE(an_loss(probs_from({{lo, hi, lo}}), obs).value, 1e-6);
}

TEST(AnLoss, RejectsBadIndex) {
  const std::vector<std::size_t> obs{2};
  EXPECT_THROW(an_loss(RealMatrix(1, 2, 0.5), obs), LabelError);
  const std::vector<std::size_t> too_few{};
  EXPECT_THROW(an_loss(RealMatrix(1, 2, 0.5), too_few), DimensionError);
}

TEST(EmLoss, HandEvaluatedValue) {
  const std::vector<std::size_t> obs{0};
  const auto out = em_loss(probs_from({{0.9, 0.5}}), obs, 0.1);
  EXPECT_NEAR(out.value, (-std::log(0.9) - 0.1 * std::log(2.0)) / 2.0, 1e-15);
  EXPECT_NEAR(out.value, 0.018024, 2e-6);
  EXPECT_NEAR(out.dlogits(0, 0), (0.9 - 1.0) / 2.0, 1e-15);
}

TEST(EmLoss, UnobservedGradientVanishesAtOneHalf) {
  const std::vector<std::size_t> obs{0};
  const auto out = em_loss(probs_from({{0.7, 0.5, 0.5}}), obs, 0.3);
  EXPECT_EQ(out.dlogits(0, 1), 0.0);
  EXPECT_EQ(out.dlogits(0, 2), 0.0);
}

// Finite differences of the loss value with respect to the logits.
template <typename Loss>
double logit_fd_error(const RealMatrix& logits, Loss&& loss) {
  auto probs_of = [](const RealMatrix& z) {
    RealMatrix p(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) p.flat()[i] = clamp_prob(sigmoid(z.flat()[i]));
    return p;
  };
  const RealMatrix analytic = loss(probs_of(logits)).dlogits;
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    RealMatrix up = logits, down = logits;
    up.flat()[i] += h;
    down.flat()[i] -= h;
    const double numeric = (loss(probs_of(up)).value - loss(probs_of(down)).value) / (2 * h);
    const double a = analytic.flat()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
  }
  return worst;
}

TEST(EmLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logit(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + rng() % 5, l = 2 + rng() % 5;
    RealMatrix z(b, l);
    for (double& v : z.flat()) v = logit(rng);
    const auto obs = random_observed(b, l, rng);
    EXPECT_LT(logit_fd_error(z, [&](const RealMatrix& p) { return em_loss(p, obs, 0.1); }), 1e-6);
    EXPECT_LT(logit_fd_error(z, [&](const RealMatrix& p) { return an_loss(p, obs); }), 1e-6);
  }
}

TEST(EmLoss, GradientStepMovesUnobservedTowardOneHalf) {
  const std::vector<std::size_t> obs{0};
  for (double z : {-3.0, -0.7, -0.01, 0.02, 1.5, 4.0}) {
    const double p = sigmoid(z);
    RealMatrix probs(1, 2);
    probs(0, 0) = 0.8;
    probs(0, 1) = p;
    const double g = em_loss(probs, obs, 0.1).dlogits(0, 1);
    const double stepped = sigmoid(z - 0.5 * g);
    EXPECT_LT(std::abs(stepped - 0.5), std::abs(p - 0.5)) << "z=" << z;
  }
}

TEST(Losses, DuplicatingTheBatchKeepsValues) {
  std::mt19937_64 rng(19);
  const RealMatrix p = random_probs(3, 4, rng);
  const auto obs = random_observed(3, 4, rng);
  BinaryMatrix y(3, 4);
  for (auto& v : y.flat()) v = rng() & 1;
  const std::vector<std::size_t> dup{0, 1, 2, 0, 1, 2};
  const RealMatrix p2 = gather_rows(p, std::span<const std::size_t>(dup));
  const BinaryMatrix y2 = gather_rows(y, std::span<const std::size_t>(dup));
  std::vector<std::size_t> obs2;
  for (auto i : dup) obs2.push_back(obs[i]);
  EXPECT_NEAR(bce_full(p, y).value, bce_full(p2, y2).value, 1e-15);
  EXPECT_NEAR(an_loss(p, obs).value, an_loss(p2, obs2).value, 1e-15);
  EXPECT_NEAR(em_loss(p, obs, 0.1).value, em_loss(p2, obs2, 0.1).value, 1e-15);
}

TEST(EmLoss, RejectsNegativeAlphaAndBadIndex) {
  const std::vector<std::size_t> obs{0};
  EXPECT_THROW(em_loss(RealMatrix(1, 2, 0.5), obs, -0.1), ConfigError);
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(em_loss(RealMatrix(1, 2, 0.5), bad, 0.1), LabelError);
}

// End-to-end: each loss through the network against finite differences.
TEST(Losses, EndToEndParameterGradients) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const MlpModel m = test::random_model(8, 16, 5, 100 + trial);
    const RealMatrix x = test::random_matrix(4, 8, rng);
    const auto obs = random_observed(4, 5, rng);
    const auto cache = forward_cached(m, x);
    const auto a = test::flatten(backward(m, x, cache, em_loss(cache.probs, obs, 0.1).dlogits));
    const auto n = test::numeric_gradient(m, x, [&](const RealMatrix& p) { return em_loss(p, obs, 0.1).value; });
    EXPECT_LT(test::max_relative_error(a, n), 1e-4);
  }
}

}  // namespace
}  // namespace spml
