#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "spml/data.hpp"
#include "spml/error.hpp"
#include "spml/losses.hpp"
#include "spml/metrics.hpp"
#include "spml/model.hpp"
#include "spml/pseudo.hpp"
#include "spml/random.hpp"

namespace spml {

/// Which kind of supervision a model was trained on. Recorded on every
/// trained model so label hygiene can be audited after the fact.
enum class LabelSource { SinglePositive, Pseudo, Full };

inline std::string to_string(LabelSource s) {
  switch (s) {
    case LabelSource::SinglePositive: return "single-positive";
    case LabelSource::Pseudo: return "pseudo";
    case LabelSource::Full: return "full";
  }
  return "?";
}

struct TrainedModel {
  MlpModel model;
  LossKind loss = LossKind::FullBce;
  LabelSource consumed = LabelSource::Full;
  std::vector<double> epoch_losses;  // example-weighted mean batch loss per epoch
};

namespace detail {

// Mini-batch Adam loop shared by every training entry point. `batch_loss`
// receives the example indices of the batch and the forward probabilities
// and returns the mean-reduced loss for that batch.
template <typename BatchLoss>
std::pair<MlpModel, std::vector<double>> fit(const FeatureMatrix& x, std::size_t labels,
                                             const TrainConfig& cfg, BatchLoss&& batch_loss) {
  cfg.validate();
  const std::size_t n = x.rows();
  if (n == 0) throw ConfigError("training set is empty");
  if (static_cast<std::size_t>(cfg.batch_size) > n) {
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds training set size " +
                      std::to_string(n));
  }
  MlpModel model = init_model(static_cast<int>(x.cols()), cfg.hidden_units, static_cast<int>(labels),
                              cfg.seed);
  OptimizerState opt = make_optimizer(model, cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, stream::kShuffle));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0, batch = 0; start < n; start += bs, ++batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, n - start));
      const RealMatrix xb = gather_rows(x, idx);
      const ForwardCache cache = forward_cached(model, xb);
      const LossOutput loss = batch_loss(idx, cache.probs);
      if (!std::isfinite(loss.value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
      }
      weighted += loss.value * static_cast<double>(idx.size());
      try {
        optimizer_step(model, backward(model, xb, cache, loss.dlogits), opt);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
      }
    }
    history.push_back(weighted / static_cast<double>(n));
  }
  return {std::move(model), std::move(history)};
}

}  // namespace detail

/// Trains on single-positive data with the AN or EM loss.
inline TrainedModel train_single_positive(const SinglePositiveDataset& data, const TrainConfig& cfg,
                                          double em_alpha = 0.1) {
  if (cfg.loss == LossKind::FullBce) {
    throw ConfigError("single-positive training needs loss an or em; full BCE would need full labels");
  }
  if (data.observed_positive.size() != data.size()) {
    throw DimensionError("single-positive dataset: index count does not match feature rows");
  }
  LossConfig{cfg.loss, em_alpha}.validate();
  std::vector<std::size_t> obs;
  auto [model, history] =
      detail::fit(data.features, data.num_labels, cfg, [&](std::span<const std::size_t> idx, const RealMatrix& p) {
        obs.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) obs[i] = data.observed_positive[idx[i]];
        return cfg.loss == LossKind::AssumeNegative ? an_loss(p, obs) : em_loss(p, obs, em_alpha);
      });
  return {std::move(model), cfg.loss, LabelSource::SinglePositive, std::move(history)};
}

/// Trains the teacher f on single-positive data.
inline TrainedModel train_teacher(const SinglePositiveDataset& data, const TrainConfig& cfg,
                                  double em_alpha = 0.1) {
  return train_single_positive(data, cfg, em_alpha);
}

/// Full-supervision BCE training. `source` records where the labels came from.
inline TrainedModel train_full(const FeatureMatrix& features, const BinaryMatrix& labels,
                               const TrainConfig& cfg, LabelSource source) {
  if (cfg.loss != LossKind::FullBce) throw ConfigError("full-label training uses loss full");
  if (source == LabelSource::SinglePositive) throw ConfigError("full training cannot consume single-positive labels");
  if (features.rows() != labels.rows()) throw DimensionError("train_full: feature/label row mismatch");
  auto [model, history] =
      detail::fit(features, labels.cols(), cfg, [&](std::span<const std::size_t> idx, const RealMatrix& p) {
        return bce_full(p, gather_rows(labels, idx));
      });
  return {std::move(model), cfg.loss, source, std::move(history)};
}

struct StudentStage {
  RealMatrix teacher_probs;  // teacher predictions on the training features
  PseudoLabelMatrix pseudo;
  TrainedModel student;
};

/// Thresholds the teacher's predictions on the training set and trains the
/// student on the resulting pseudo multi-labels.
inline StudentStage run_student_stage(const MlpModel& teacher, const SinglePositiveDataset& data,
                                      const TrainConfig& student_cfg, const PseudoLabelConfig& pseudo_cfg) {
  pseudo_cfg.validate();
  StudentStage s;
  s.teacher_probs = forward(teacher, data.features);
  s.pseudo = make_pseudo_labels(s.teacher_probs, pseudo_cfg,
                                std::span<const std::size_t>(data.observed_positive));
  s.student = train_full(data.features, s.pseudo, student_cfg, LabelSource::Pseudo);
  return s;
}

struct Algorithm1Result {
  TrainedModel teacher;
  PseudoLabelMatrix pseudo;
  TrainedModel student;
};

/// Teacher on single positives, thresholded pseudo multi-labels, student
/// under full supervision on those labels.
inline Algorithm1Result run_algorithm1(const SinglePositiveDataset& data, const TrainConfig& teacher_cfg,
                                       const TrainConfig& student_cfg, const PseudoLabelConfig& pseudo_cfg,
                                       double em_alpha = 0.1) {
  pseudo_cfg.validate();
  if (student_cfg.loss != LossKind::FullBce) throw ConfigError("the student is trained with loss full");
  TrainedModel teacher = train_teacher(data, teacher_cfg, em_alpha);
  StudentStage stage = run_student_stage(teacher.model, data, student_cfg, pseudo_cfg);
  return {std::move(teacher), std::move(stage.pseudo), std::move(stage.student)};
}

inline double test_map(const MlpModel& model, const LabeledSet& test) {
  return mean_average_precision(forward(model, test.features), test.labels).map;
}

// ---------------------------------------------------------------------------
// Sweep

inline std::vector<double> default_tau_grid() { return {0.55, 0.65, 0.75, 0.85, 0.95}; }

struct ExperimentConfig {
  SynthConfig synth;
  std::optional<LabeledSet> dataset;  // used instead of synth when present
  SplitFractions split;
  TrainConfig teacher{.loss = LossKind::EntropyMax};
  TrainConfig student{.loss = LossKind::FullBce};
  std::vector<double> tau_grid = default_tau_grid();
  bool keep_observed_positive = false;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  double em_alpha = 0.1;
  int jobs = 1;

  void validate() const {
    if (!dataset) synth.validate();
    teacher.validate();
    student.validate();
    if (teacher.loss == LossKind::FullBce) throw ConfigError("teacher loss must be an or em");
    if (student.loss != LossKind::FullBce) throw ConfigError("student loss must be full");
    if (tau_grid.empty()) throw ConfigError("tau grid is empty");
    for (std::size_t i = 0; i < tau_grid.size(); ++i) {
      PseudoLabelConfig{tau_grid[i], keep_observed_positive}.validate();
      if (i && !(tau_grid[i] > tau_grid[i - 1])) throw ConfigError("tau grid must be strictly increasing");
    }
    if (seeds.empty()) throw ConfigError("seed list is empty");
    LossConfig{LossKind::EntropyMax, em_alpha}.validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

/// Seeds handed to each component for one experiment seed.
struct SeedPlan {
  std::uint64_t data, split, corrupt, teacher, student, an, em, skyline;
};

inline SeedPlan plan_seeds(std::uint64_t seed) {
  return {derive_seed(seed, 10), derive_seed(seed, 11), derive_seed(seed, 12), derive_seed(seed, 13),
          derive_seed(seed, 14), derive_seed(seed, 15), derive_seed(seed, 16), derive_seed(seed, 17)};
}

struct SweepResultRow {
  std::uint64_t seed = 0;
  double tau = 0.0;
  double avg_pseudo_positives = 0.0;
  double teacher_map = 0.0;
  double student_map = 0.0;
  double an_baseline_map = 0.0;
  double em_baseline_map = 0.0;
  double full_supervision_map = 0.0;
  double wall_time_s = 0.0;
};

struct AuditRecord {
  std::uint64_t seed;
  std::string role;
  LabelSource consumed;
};

struct CellArtifacts {
  double tau;
  PseudoLabelMatrix pseudo;
  MlpModel student;
};

/// Everything produced for one experiment seed, kept so the caller can
/// persist checkpoints and pseudo-label datasets.
struct SeedArtifacts {
  std::uint64_t seed = 0;
  FeatureMatrix train_features;
  MlpModel teacher, an_baseline, em_baseline, skyline;
  std::vector<CellArtifacts> cells;
};

struct SweepResult {
  std::vector<SweepResultRow> rows;  // sorted by (seed, tau)
  std::vector<AuditRecord> audit;
  std::vector<SeedArtifacts> artifacts;
};

class SweepError : public Error {
 public:
  using Error::Error;
};

struct SeedOutcome {
  std::vector<SweepResultRow> rows;
  std::vector<AuditRecord> audit;
  SeedArtifacts artifacts;
};

inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  const SeedPlan plan = plan_seeds(seed);
  SeedOutcome out;
  out.artifacts.seed = seed;

  LabeledSet all;
  if (cfg.dataset) {
    all = *cfg.dataset;
  } else {
    SynthConfig synth = cfg.synth;
    synth.seed = plan.data;
    all = generate_synthetic(synth);
  }
  const DatasetSplit split = split_dataset(all.features, all.labels, cfg.split, plan.split);
  const SinglePositiveDataset spml = corrupt_to_single_positive(split.train, plan.corrupt);

  auto with_seed = [](TrainConfig c, std::uint64_t s, LossKind loss) {
    c.seed = s;
    c.loss = loss;
    return c;
  };
  auto audit = [&](const char* role, const TrainedModel& m) {
    out.audit.push_back({seed, role, m.consumed});
  };

  const TrainedModel an = train_single_positive(spml, with_seed(cfg.teacher, plan.an, LossKind::AssumeNegative),
                                                cfg.em_alpha);
  const TrainedModel em = train_single_positive(spml, with_seed(cfg.teacher, plan.em, LossKind::EntropyMax),
                                                cfg.em_alpha);
  const TrainedModel sky = train_full(split.train.features, split.train.labels,
                                      with_seed(cfg.student, plan.skyline, LossKind::FullBce), LabelSource::Full);
  audit("an_baseline", an);
  audit("em_baseline", em);
  audit("full_supervision", sky);
  const double an_map = test_map(an.model, split.test);
  const double em_map = test_map(em.model, split.test);
  const double sky_map = test_map(sky.model, split.test);

  // The teacher does not depend on tau, so it is trained once per seed.
  const auto t0 = clock::now();
  const TrainedModel teacher = train_teacher(spml, with_seed(cfg.teacher, plan.teacher, cfg.teacher.loss),
                                             cfg.em_alpha);
  const double teacher_secs = std::chrono::duration<double>(clock::now() - t0).count();
  audit("teacher", teacher);
  const double teacher_map = test_map(teacher.model, split.test);

  const TrainConfig student_cfg = with_seed(cfg.student, plan.student, LossKind::FullBce);
  for (const double tau : cfg.tau_grid) {
    try {
      const auto t1 = clock::now();
      StudentStage stage = run_student_stage(teacher.model, spml, student_cfg, {tau, cfg.keep_observed_positive});
      const double secs = std::chrono::duration<double>(clock::now() - t1).count();
      audit("student", stage.student);
      SweepResultRow row;
      row.seed = seed;
      row.tau = tau;
      row.avg_pseudo_positives = avg_positives_per_example(stage.pseudo);
      row.teacher_map = teacher_map;
      row.student_map = test_map(stage.student.model, split.test);
      row.an_baseline_map = an_map;
      row.em_baseline_map = em_map;
      row.full_supervision_map = sky_map;
      row.wall_time_s = teacher_secs + secs;
      out.rows.push_back(row);
      out.artifacts.cells.push_back({tau, std::move(stage.pseudo), std::move(stage.student.model)});
    } catch (const Error& e) {
      throw SweepError("sweep cell (seed=" + std::to_string(seed) + ", tau=" + format_double(tau) +
                       ") failed: " + e.what());
    }
  }
  out.artifacts.train_features = spml.features;
  out.artifacts.teacher = teacher.model;
  out.artifacts.an_baseline = an.model;
  out.artifacts.em_baseline = em.model;
  out.artifacts.skyline = sky.model;
  return out;
}

/// Runs every (seed, tau) cell. Seeds are independent and may run on up to
/// cfg.jobs threads; results are ordered by (seed, tau) regardless.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  const auto jobs = static_cast<std::size_t>(cfg.jobs);
  for (std::size_t start = 0; start < cfg.seeds.size(); start += jobs) {
    std::vector<std::future<SeedOutcome>> running;
    const std::size_t end = std::min(cfg.seeds.size(), start + jobs);
    for (std::size_t i = start; i < end; ++i) {
      if (jobs == 1) {
        outcomes[i] = run_seed(cfg, cfg.seeds[i]);
      } else {
        running.push_back(std::async(std::launch::async, [&cfg, i] { return run_seed(cfg, cfg.seeds[i]); }));
      }
    }
    for (std::size_t i = 0; i < running.size(); ++i) outcomes[start + i] = running[i].get();
  }

  SweepResult result;
  for (auto& o : outcomes) {
    result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
    result.audit.insert(result.audit.end(), o.audit.begin(), o.audit.end());
    result.artifacts.push_back(std::move(o.artifacts));
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
    return a.seed != b.seed ? a.seed < b.seed : a.tau < b.tau;
  });
  return result;
}

/// Mean over seeds of every numeric column, one row per tau.
inline std::vector<SweepResultRow> mean_rows(const std::vector<SweepResultRow>& rows) {
  std::map<double, std::pair<SweepResultRow, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& [sum, count] = acc[r.tau];
    sum.tau = r.tau;
    sum.avg_pseudo_positives += r.avg_pseudo_positives;
    sum.teacher_map += r.teacher_map;
    sum.student_map += r.student_map;
    sum.an_baseline_map += r.an_baseline_map;
    sum.em_baseline_map += r.em_baseline_map;
    sum.full_supervision_map += r.full_supervision_map;
    sum.wall_time_s += r.wall_time_s;
    ++count;
  }
  std::vector<SweepResultRow> out;
  for (auto& [tau, entry] : acc) {
    auto [m, count] = entry;
    const double c = static_cast<double>(count);
    m.avg_pseudo_positives /= c;
    m.teacher_map /= c;
    m.student_map /= c;
    m.an_baseline_map /= c;
    m.em_baseline_map /= c;
    m.full_supervision_map /= c;
    m.wall_time_s /= c;
    out.push_back(m);
  }
  return out;
}

}  // namespace spml
