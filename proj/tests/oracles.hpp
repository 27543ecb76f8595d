#pragma once

// Reference computations used only by the tests. They deliberately avoid the
// library's own code paths (no sorting for AP, no vectorized loss loops).

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "spml/losses.hpp"
#include "spml/model.hpp"

namespace spml::test {

// AP by explicit pairwise counting: for every positive i, its rank is 1 plus
// the number of examples that precede it (higher score, or equal score and
// lower index), and precision@rank counts positives among those plus itself.
inline double brute_force_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double sum = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    ++positives;
    int ahead = 0, ahead_pos = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const bool before = s[j] > s[i] || (s[j] == s[i] && j < i);
      if (before) {
        ++ahead;
        ahead_pos += y[j];
      }
    }
    sum += static_cast<double>(ahead_pos + 1) / static_cast<double>(ahead + 1);
  }
  return positives ? sum / positives : std::nan("");
}

// Mean-reduced loss value evaluated from scratch for a given model and batch.
using LossFn = std::function<double(const RealMatrix& probs)>;

inline double model_loss(const MlpModel& m, const RealMatrix& x, const LossFn& loss) {
  return loss(forward(m, x));
}

// Central finite differences of the loss with respect to every parameter,
// in w1, b1, w2, b2 order.
inline std::vector<double> numeric_gradient(MlpModel m, const RealMatrix& x, const LossFn& loss,
                                            double step = 1e-5) {
  std::vector<double> out;
  auto probe = [&](std::span<double> block) {
    for (double& p : block) {
      const double saved = p;
      p = saved + step;
      const double up = model_loss(m, x, loss);
      p = saved - step;
      const double down = model_loss(m, x, loss);
      p = saved;
      out.push_back((up - down) / (2.0 * step));
    }
  };
  probe(m.w1.flat());
  probe(m.b1);
  probe(m.w2.flat());
  probe(m.b2);
  return out;
}

inline std::vector<double> flatten(const ParamSet& g) {
  std::vector<double> out;
  for_each_block(g, [&](auto block) { out.insert(out.end(), block.begin(), block.end()); });
  return out;
}

// Largest per-entry relative error; entries where both gradients are tiny
// are compared against a 1e-6 floor instead of their own magnitude.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline RealMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  RealMatrix m(r, c);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

// Random model with non-zero biases so every parameter block matters.
inline MlpModel random_model(int d, int h, int l, std::uint64_t seed) {
  MlpModel m = init_model(d, h, l, seed);
  std::mt19937_64 rng(seed ^ 0xabcdefULL);
  std::normal_distribution<double> dist(0.0, 0.3);
  for (double& v : m.b1) v = dist(rng);
  for (double& v : m.b2) v = dist(rng);
  return m;
}

}  // namespace spml::test
