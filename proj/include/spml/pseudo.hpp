#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "spml/error.hpp"
#include "spml/matrix.hpp"

namespace spml {

using PseudoLabelMatrix = BinaryMatrix;

struct PseudoLabelConfig {
  double tau = 0.75;
  // Force the known positive of each example back on after thresholding.
  bool keep_observed_positive = false;

  void validate() const {
    if (!(tau >= 0.0 && tau < 1.0)) {
      throw ConfigError("tau must lie in [0, 1), got " + std::to_string(tau));
    }
  }
};

/// Hard labels from teacher probabilities: 1 iff p > tau. A probability equal
/// to tau maps to 0.
inline PseudoLabelMatrix make_pseudo_labels(const RealMatrix& probs, const PseudoLabelConfig& cfg,
                                            std::optional<std::span<const std::size_t>> observed = {}) {
  cfg.validate();
  PseudoLabelMatrix out(probs.rows(), probs.cols(), 0);
  auto p = probs.flat();
  auto y = out.flat();
  for (std::size_t i = 0; i < p.size(); ++i) y[i] = p[i] > cfg.tau ? 1 : 0;

  if (cfg.keep_observed_positive) {
    if (!observed) throw ConfigError("keep_observed_positive requires the observed indices");
    if (observed->size() != probs.rows()) {
      throw DimensionError("make_pseudo_labels: observed index count does not match rows");
    }
    for (std::size_t n = 0; n < observed->size(); ++n) {
      const std::size_t k = (*observed)[n];
      if (k >= probs.cols()) throw LabelError("make_pseudo_labels: observed index out of range");
      out(n, k) = 1;
    }
  }
  return out;
}

inline double avg_positives_per_example(const BinaryMatrix& labels) {
  if (labels.rows() == 0) throw InputError("avg_positives_per_example: empty label matrix");
  std::size_t total = 0;
  for (auto v : labels.flat()) total += v;
  return static_cast<double>(total) / static_cast<double>(labels.rows());
}

}  // namespace spml
