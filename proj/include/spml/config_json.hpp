#pragma once

// JSON (de)serialization of experiment configuration. Requires nlohmann/json.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "spml/pipeline.hpp"

namespace spml {

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"hidden_units", c.hidden_units},
          {"seed", c.seed},
          {"loss", to_string(c.loss)}};
}

inline void update_from_json(TrainConfig& c, const nlohmann::json& j) {
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("hidden_units")) c.hidden_units = j.at("hidden_units").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"n", c.n},
          {"d", c.d},
          {"l", c.l},
          {"pos_rate", c.target_positive_rate},
          {"noise_std", c.noise_std},
          {"seed", c.seed}};
}

inline void update_from_json(SynthConfig& c, const nlohmann::json& j) {
  if (j.contains("n")) c.n = j.at("n").get<int>();
  if (j.contains("d")) c.d = j.at("d").get<int>();
  if (j.contains("l")) c.l = j.at("l").get<int>();
  if (j.contains("pos_rate")) c.target_positive_rate = j.at("pos_rate").get<double>();
  if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
}

/// Resolved configuration snapshot. The dataset itself is not embedded; the
/// caller records its path separately.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"synth", to_json(c.synth)},
          {"split", {c.split.train, c.split.val, c.split.test}},
          {"teacher", to_json(c.teacher)},
          {"student", to_json(c.student)},
          {"tau_grid", c.tau_grid},
          {"keep_observed_positive", c.keep_observed_positive},
          {"seeds", c.seeds},
          {"em_alpha", c.em_alpha},
          {"jobs", c.jobs}};
}

// Keys that are absent keep their current value, so a file only needs to
// mention what it changes.
inline void update_from_json(ExperimentConfig& c, const nlohmann::json& j) {
  static const char* kKnown[] = {"synth", "dataset", "split", "teacher", "student", "tau_grid",
                                 "keep_observed_positive", "seeds", "em_alpha", "jobs"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  try {
    if (j.contains("synth")) update_from_json(c.synth, j.at("synth"));
    if (j.contains("split")) {
      const auto v = j.at("split").get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("split must list three fractions");
      c.split = {v[0], v[1], v[2]};
    }
    if (j.contains("teacher")) update_from_json(c.teacher, j.at("teacher"));
    if (j.contains("student")) update_from_json(c.student, j.at("student"));
    if (j.contains("tau_grid")) c.tau_grid = j.at("tau_grid").get<std::vector<double>>();
    if (j.contains("keep_observed_positive")) c.keep_observed_positive = j.at("keep_observed_positive").get<bool>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("em_alpha")) c.em_alpha = j.at("em_alpha").get<double>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

}  // namespace spml
