#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spml/error.hpp"
#include "spml/matrix.hpp"

namespace spml {

// Non-interpolated average precision: rank by descending score (ties go to
// the lower example index), then average precision@rank over the positives.
// Returns nullopt when there are no positives.
inline std::optional<double> average_precision(std::span<const double> scores,
                                               std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (!all_finite(scores)) throw InputError("average_precision: non-finite score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto y = labels[order[rank]];
    if (y > 1) throw LabelError("average_precision: label values must be 0 or 1");
    if (y) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

struct EvalReport {
  double map = 0.0;
  std::vector<std::optional<double>> per_class_ap;
  std::size_t n_classes_evaluated = 0;
};

/// Per-class AP over columns; MAP averages the classes that have at least
/// one positive.
inline EvalReport mean_average_precision(const RealMatrix& scores, const BinaryMatrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw DimensionError("mean_average_precision: scores " + std::to_string(scores.rows()) + "x" +
                         std::to_string(scores.cols()) + " vs labels " + std::to_string(labels.rows()) +
                         "x" + std::to_string(labels.cols()));
  }
  const std::size_t n = scores.rows(), l = scores.cols();
  EvalReport report;
  report.per_class_ap.resize(l);
  std::vector<double> col_scores(n);
  std::vector<std::uint8_t> col_labels(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < l; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      col_scores[i] = scores(i, k);
      col_labels[i] = labels(i, k);
    }
    report.per_class_ap[k] = average_precision(col_scores, col_labels);
    if (report.per_class_ap[k]) {
      sum += *report.per_class_ap[k];
      ++report.n_classes_evaluated;
    }
  }
  if (report.n_classes_evaluated == 0) {
    throw EvaluationError("mean_average_precision: no class has a positive example");
  }
  report.map = sum / static_cast<double>(report.n_classes_evaluated);
  return report;
}

}  // namespace spml
