#pragma once

#include <cmath>
#include <span>
#include <string>

#include "spml/error.hpp"
#include "spml/matrix.hpp"
#include "spml/model.hpp"

namespace spml {

struct LossConfig {
  LossKind kind = LossKind::FullBce;
  double em_alpha = 0.1;

  void validate() const {
    if (!std::isfinite(em_alpha) || em_alpha < 0.0) {
      throw ConfigError("em_alpha must be finite and non-negative");
    }
  }
};

/// Scalar loss and its gradient with respect to the output logits. Every
/// loss is a mean over all B*L entries.
struct LossOutput {
  double value = 0.0;
  RealMatrix dlogits;
};

namespace detail {

inline void check_labels_shape(const RealMatrix& probs, const BinaryMatrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
    throw DimensionError("loss: probabilities are " + std::to_string(probs.rows()) + "x" +
                         std::to_string(probs.cols()) + " but labels are " +
                         std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
  }
}

inline void check_observed(const RealMatrix& probs, std::span<const std::size_t> observed) {
  if (observed.size() != probs.rows()) {
    throw DimensionError("loss: " + std::to_string(observed.size()) + " observed indices for a batch of " +
                         std::to_string(probs.rows()));
  }
  for (std::size_t n = 0; n < observed.size(); ++n) {
    if (observed[n] >= probs.cols()) {
      throw LabelError("loss: observed index " + std::to_string(observed[n]) + " of row " +
                       std::to_string(n) + " is outside [0, " + std::to_string(probs.cols()) + ")");
    }
  }
}

}  // namespace detail

/// Binary entropy in nats.
inline double binary_entropy(double p) { return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p); }

inline LossOutput bce_full(const RealMatrix& probs, const BinaryMatrix& labels) {
  detail::check_labels_shape(probs, labels);
  const double scale = 1.0 / static_cast<double>(probs.size());
  LossOutput out{0.0, RealMatrix(probs.rows(), probs.cols())};
  auto p = probs.flat();
  auto y = labels.flat();
  auto g = out.dlogits.flat();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sum += y[i] ? -std::log(p[i]) : -std::log(1.0 - p[i]);
    g[i] = (p[i] - static_cast<double>(y[i])) * scale;
  }
  out.value = sum * scale;
  return out;
}

/// One-hot expansion of single-positive indices: the observed category is 1,
/// every unobserved category is assumed absent.
inline BinaryMatrix expand_assume_negative(std::span<const std::size_t> observed, std::size_t labels) {
  BinaryMatrix y(observed.size(), labels, 0);
  for (std::size_t n = 0; n < observed.size(); ++n) {
    if (observed[n] >= labels) {
      throw LabelError("observed index " + std::to_string(observed[n]) + " out of range for L=" +
                       std::to_string(labels));
    }
    y(n, observed[n]) = 1;
  }
  return y;
}

inline LossOutput an_loss(const RealMatrix& probs, std::span<const std::size_t> observed) {
  detail::check_observed(probs, observed);
  return bce_full(probs, expand_assume_negative(observed, probs.cols()));
}

// Observed entries: -log p. Unobserved entries: -alpha * H(p), which is
// minimized at p = 1/2.
inline LossOutput em_loss(const RealMatrix& probs, std::span<const std::size_t> observed,
                          double alpha) {
  detail::check_observed(probs, observed);
  if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("em_loss: alpha must be >= 0");
  const double scale = 1.0 / static_cast<double>(probs.size());
  LossOutput out{0.0, RealMatrix(probs.rows(), probs.cols())};
  double sum = 0.0;
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    auto p = probs.row(n);
    auto g = out.dlogits.row(n);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k == observed[n]) {
        sum += -std::log(p[k]);
        g[k] = (p[k] - 1.0) * scale;
      } else {
        sum += -alpha * binary_entropy(p[k]);
        g[k] = -alpha * p[k] * (1.0 - p[k]) * std::log((1.0 - p[k]) / p[k]) * scale;
      }
    }
  }
  out.value = sum * scale;
  return out;
}

}  // namespace spml
