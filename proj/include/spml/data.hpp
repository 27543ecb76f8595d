#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "spml/error.hpp"
#include "spml/matrix.hpp"
#include "spml/random.hpp"
#include "spml/text.hpp"

namespace spml {

using FeatureMatrix = RealMatrix;
using FullLabelMatrix = BinaryMatrix;

/// Features with fully observed binary labels.
struct LabeledSet {
  FeatureMatrix features;
  FullLabelMatrix labels;

  std::size_t size() const noexcept { return features.rows(); }
  bool operator==(const LabeledSet&) const = default;
};

/// Features with exactly one observed positive category per example. The
/// remaining categories are unknown; they are not stored at all, so nothing
/// downstream can mistake them for negatives.
struct SinglePositiveDataset {
  FeatureMatrix features;
  std::vector<std::size_t> observed_positive;
  std::size_t num_labels = 0;

  std::size_t size() const noexcept { return features.rows(); }
  bool operator==(const SinglePositiveDataset&) const = default;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> val_index;
  std::vector<std::size_t> test_index;
  SplitFractions fractions;
};

struct SynthConfig {
  int n = 2500;
  int d = 20;
  int l = 10;
  double target_positive_rate = 0.3;
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1 || d < 1 || l < 1) throw ConfigError("synthetic N, D and L must be >= 1");
    if (!(target_positive_rate > 0.0 && target_positive_rate < 1.0)) {
      throw ConfigError("target_positive_rate must lie in (0, 1)");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
      throw ConfigError("noise_std must be finite and >= 0");
    }
  }
};

inline std::size_t count_positives(std::span<const std::uint8_t> row) {
  return static_cast<std::size_t>(std::count(row.begin(), row.end(), std::uint8_t{1}));
}

// Each class is a random hyperplane through the feature space. Its offset is
// the (1 - rate) empirical quantile of the projections, so roughly `rate` of
// the examples land on the positive side. Rows that come out with no
// positive at all are redrawn.
inline LabeledSet generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n);
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto l = static_cast<std::size_t>(cfg.l);
  constexpr int kMaxAttempts = 1000;

  Rng rng(derive_seed(cfg.seed, stream::kData));
  std::normal_distribution<double> normal(0.0, 1.0);

  RealMatrix directions(l, d);
  for (std::size_t c = 0; c < l; ++c) {
    auto w = directions.row(c);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : w) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : w) v /= norm;
  }

  LabeledSet out{FeatureMatrix(n, d), FullLabelMatrix(n, l, 0)};
  for (double& v : out.features.flat()) v = normal(rng);

  auto project = [&](std::span<const double> x, std::size_t c) {
    auto w = directions.row(c);
    return std::inner_product(x.begin(), x.end(), w.begin(), 0.0);
  };

  std::vector<double> thresholds(l);
  std::vector<double> scores(n);
  const auto q = std::min(n - 1, static_cast<std::size_t>(std::floor((1.0 - cfg.target_positive_rate) *
                                                                     static_cast<double>(n))));
  for (std::size_t c = 0; c < l; ++c) {
    for (std::size_t i = 0; i < n; ++i) scores[i] = project(out.features.row(i), c);
    std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(q), scores.end());
    thresholds[c] = scores[q];
  }

  auto label_row = [&](std::size_t i) {
    auto x = out.features.row(i);
    auto y = out.labels.row(i);
    for (std::size_t c = 0; c < l; ++c) {
      const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * normal(rng) : 0.0;
      y[c] = project(x, c) + noise > thresholds[c] ? 1 : 0;
    }
  };

  for (std::size_t i = 0; i < n; ++i) {
    label_row(i);
    int attempts = 0;
    while (count_positives(out.labels.row(i)) == 0) {
      if (++attempts > kMaxAttempts) {
        throw GenerationError("generate_synthetic: row " + std::to_string(i) + " had no positive after " +
                              std::to_string(kMaxAttempts) + " redraws; config is infeasible");
      }
      for (double& v : out.features.row(i)) v = normal(rng);
      label_row(i);
    }
  }
  return out;
}

/// Keeps one positive per row, chosen uniformly among that row's positives.
inline SinglePositiveDataset corrupt_to_single_positive(const FullLabelMatrix& labels,
                                                        const FeatureMatrix& features,
                                                        std::uint64_t seed) {
  if (labels.rows() != features.rows()) {
    throw DimensionError("corrupt: " + std::to_string(labels.rows()) + " label rows vs " +
                         std::to_string(features.rows()) + " feature rows");
  }
  Rng rng(derive_seed(seed, stream::kCorrupt));
  SinglePositiveDataset out{features, std::vector<std::size_t>(labels.rows()), labels.cols()};
  std::vector<std::size_t> positives;
  for (std::size_t n = 0; n < labels.rows(); ++n) {
    positives.clear();
    auto row = labels.row(n);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k]) positives.push_back(k);
    }
    if (positives.empty()) {
      throw CorruptionError("corrupt: row " + std::to_string(n) + " has no positive label");
    }
    std::uniform_int_distribution<std::size_t> pick(0, positives.size() - 1);
    out.observed_positive[n] = positives[pick(rng)];
  }
  return out;
}

inline SinglePositiveDataset corrupt_to_single_positive(const LabeledSet& set, std::uint64_t seed) {
  return corrupt_to_single_positive(set.labels, set.features, seed);
}

/// Seeded shuffle, then contiguous train/val/test partition.
inline DatasetSplit split_dataset(const FeatureMatrix& features, const FullLabelMatrix& labels,
                                  SplitFractions fr, std::uint64_t seed) {
  if (labels.rows() != features.rows()) throw DimensionError("split: feature/label row mismatch");
  if (!(fr.train > 0.0 && fr.val > 0.0 && fr.test > 0.0) ||
      std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
    throw SplitError("split fractions must be positive and sum to 1");
  }
  const std::size_t n = features.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, stream::kSplit));
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::llround(fr.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fr.val * static_cast<double>(n)));
  if (n_train + n_val >= n || n_train == 0 || n_val == 0) {
    throw SplitError("split of " + std::to_string(n) + " rows leaves an empty partition");
  }
  DatasetSplit s;
  s.fractions = fr;
  s.train_index.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val_index.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test_index.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  auto take = [&](const std::vector<std::size_t>& idx) {
    return LabeledSet{gather_rows(features, std::span<const std::size_t>(idx)),
                      gather_rows(labels, std::span<const std::size_t>(idx))};
  };
  s.train = take(s.train_index);
  s.val = take(s.val_index);
  s.test = take(s.test_index);
  return s;
}

// ---------------------------------------------------------------------------
// Dataset text format
//
//   spml-dataset v1 N=<n> D=<d> L=<l> kind=<full|single>
//   x_1,...,x_D|y_1,...,y_L        (kind=full)
//   x_1,...,x_D|index              (kind=single)
//
// Lines starting with '#' are comments.

enum class DatasetKind { Full, Single };

struct LoadedDataset {
  DatasetKind kind = DatasetKind::Full;
  FeatureMatrix features;
  FullLabelMatrix labels;                 // kind == Full
  std::vector<std::size_t> observed;      // kind == Single
  std::size_t num_labels = 0;

  LabeledSet as_full() const {
    if (kind != DatasetKind::Full) throw ConfigError("dataset is kind=single; full labels are required");
    return {features, labels};
  }
  SinglePositiveDataset as_single() const {
    if (kind != DatasetKind::Single) throw ConfigError("dataset is kind=full; expected kind=single");
    return {features, observed, num_labels};
  }
};

namespace detail {

inline void write_features(std::ostream& os, std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) os << ',';
    os << format_double(x[i]);
  }
  os << '|';
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Splits on commas; an empty input yields no fields.
inline std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline void require_same_rows(const LabeledSet& set) {
  if (set.features.rows() != set.labels.rows()) {
    throw DimensionError("dataset: feature and label row counts differ");
  }
}

inline void write_dataset(std::ostream& os, const LabeledSet& set) {
  require_same_rows(set);
  os << "spml-dataset v1 N=" << set.features.rows() << " D=" << set.features.cols()
     << " L=" << set.labels.cols() << " kind=full\n";
  for (std::size_t n = 0; n < set.features.rows(); ++n) {
    detail::write_features(os, set.features.row(n));
    auto y = set.labels.row(n);
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (k) os << ',';
      os << static_cast<int>(y[k]);
    }
    os << '\n';
  }
}

inline void write_dataset(std::ostream& os, const SinglePositiveDataset& set) {
  if (set.observed_positive.size() != set.features.rows()) {
    throw DimensionError("single-positive dataset: index count does not match feature rows");
  }
  os << "spml-dataset v1 N=" << set.features.rows() << " D=" << set.features.cols()
     << " L=" << set.num_labels << " kind=single\n";
  for (std::size_t n = 0; n < set.features.rows(); ++n) {
    detail::write_features(os, set.features.row(n));
    os << set.observed_positive[n] << '\n';
  }
}

inline LoadedDataset read_dataset(std::istream& is, const std::string& source = "<dataset>") {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(source, lineno + 1, "missing header");
  const Header h = parse_header(line, "spml-dataset", source, lineno);
  const long n = h.require_int("N"), d = h.require_int("D"), l = h.require_int("L");
  if (n < 1 || d < 1 || l < 1) throw ParseError(source, lineno, "N, D and L must be >= 1");
  const std::string& kind = h.require("kind");
  LoadedDataset out;
  if (kind == "full") {
    out.kind = DatasetKind::Full;
    out.labels = FullLabelMatrix(n, l, 0);
  } else if (kind == "single") {
    out.kind = DatasetKind::Single;
    out.observed.resize(n);
  } else {
    throw ParseError(source, lineno, "unknown kind '" + kind + "'");
  }
  out.num_labels = static_cast<std::size_t>(l);
  out.features = FeatureMatrix(n, d);

  for (long row = 0; row < n; ++row) {
    if (!next_line()) {
      throw ParseError(source, lineno + 1, "expected " + std::to_string(n) + " data rows, found " +
                                               std::to_string(row));
    }
    const std::string_view sv(line);
    const auto bar = sv.find('|');
    if (bar == std::string_view::npos) throw ParseError(source, lineno, "missing '|' separator");
    const auto xs = detail::split_csv(sv.substr(0, bar));
    if (xs.size() != static_cast<std::size_t>(d)) {
      throw ParseError(source, lineno, "expected " + std::to_string(d) + " features, got " +
                                           std::to_string(xs.size()));
    }
    auto frow = out.features.row(row);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      frow[i] = parse_double(xs[i], source, lineno);
      if (!std::isfinite(frow[i])) throw ParseError(source, lineno, "non-finite feature value");
    }
    const auto rest = sv.substr(bar + 1);
    if (out.kind == DatasetKind::Full) {
      const auto ys = detail::split_csv(rest);
      if (ys.size() != static_cast<std::size_t>(l)) {
        throw ParseError(source, lineno, "expected " + std::to_string(l) + " labels, got " +
                                             std::to_string(ys.size()));
      }
      auto lrow = out.labels.row(row);
      for (std::size_t k = 0; k < ys.size(); ++k) {
        if (ys[k] == "0") {
          lrow[k] = 0;
        } else if (ys[k] == "1") {
          lrow[k] = 1;
        } else {
          throw ParseError(source, lineno, "label value '" + std::string(ys[k]) + "' is not 0 or 1");
        }
      }
    } else {
      const long idx = parse_long(detail::trim(rest), source, lineno);
      if (idx < 0 || idx >= l) {
        throw ParseError(source, lineno, "observed index " + std::to_string(idx) + " outside [0, " +
                                             std::to_string(l) + ")");
      }
      out.observed[row] = static_cast<std::size_t>(idx);
    }
  }
  if (next_line()) throw ParseError(source, lineno, "more data rows than N=" + std::to_string(n));
  return out;
}

inline LoadedDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_dataset(is, path);
}

template <typename Set>
void save_dataset(const std::string& path, const Set& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_dataset(os, set);
  if (!os) throw Error("failed writing '" + path + "'");
}

}  // namespace spml
