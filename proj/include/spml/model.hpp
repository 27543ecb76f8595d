#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spml/error.hpp"
#include "spml/matrix.hpp"
#include "spml/random.hpp"
#include "spml/text.hpp"

namespace spml {

/// Lower/upper clamp applied to every emitted probability.
inline constexpr double kProbEpsilon = 1e-7;

/// One-hidden-layer ReLU network with sigmoid outputs. Serves as both the
/// teacher and the student.
struct MlpModel {
  RealMatrix w1;            // D x H
  std::vector<double> b1;   // H
  RealMatrix w2;            // H x L
  std::vector<double> b2;   // L

  std::size_t inputs() const noexcept { return w1.rows(); }
  std::size_t hidden() const noexcept { return w1.cols(); }
  std::size_t labels() const noexcept { return w2.cols(); }

  bool operator==(const MlpModel&) const = default;
};

/// Same layout as MlpModel; used for gradients and Adam moments.
using ParamSet = MlpModel;

inline ParamSet zeros_like(const MlpModel& m) {
  return {RealMatrix(m.inputs(), m.hidden()), std::vector<double>(m.hidden(), 0.0),
          RealMatrix(m.hidden(), m.labels()), std::vector<double>(m.labels(), 0.0)};
}

inline void validate_shapes(const MlpModel& m) {
  if (m.w1.rows() == 0 || m.w1.cols() == 0 || m.w2.cols() == 0 || m.b1.size() != m.w1.cols() ||
      m.w2.rows() != m.w1.cols() || m.b2.size() != m.w2.cols()) {
    throw DimensionError("inconsistent model parameter shapes");
  }
}

// Applies fn(param_span) to each parameter block in a fixed order:
// w1, b1, w2, b2. Used by the optimizer, checkpoint I/O and gradient checks.
template <typename Model, typename Fn>
void for_each_block(Model& m, Fn&& fn) {
  fn(m.w1.flat());
  fn(std::span(m.b1));
  fn(m.w2.flat());
  fn(std::span(m.b2));
}

template <typename Fn>
void for_each_block_pair(MlpModel& a, const MlpModel& b, Fn&& fn) {
  fn(a.w1.flat(), b.w1.flat());
  fn(std::span(a.b1), std::span(b.b1));
  fn(a.w2.flat(), b.w2.flat());
  fn(std::span(a.b2), std::span(b.b2));
}

/// Glorot-uniform weights, zero biases.
inline MlpModel init_model(int inputs, int hidden, int labels, std::uint64_t seed) {
  if (inputs < 1 || hidden < 1 || labels < 1) {
    throw DimensionError("init_model: dimensions must be >= 1, got D=" + std::to_string(inputs) +
                         " H=" + std::to_string(hidden) + " L=" + std::to_string(labels));
  }
  const auto d = static_cast<std::size_t>(inputs);
  const auto h = static_cast<std::size_t>(hidden);
  const auto l = static_cast<std::size_t>(labels);
  MlpModel m{RealMatrix(d, h), std::vector<double>(h, 0.0), RealMatrix(h, l),
             std::vector<double>(l, 0.0)};
  Rng rng(derive_seed(seed, stream::kInit));
  auto fill = [&rng](RealMatrix& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.flat()) v = dist(rng);
  };
  fill(m.w1);
  fill(m.w2);
  return m;
}

/// Activations kept from forward() for the matching backward() call.
struct ForwardCache {
  RealMatrix hidden_pre;  // B x H, before ReLU
  RealMatrix hidden;      // B x H, after ReLU
  RealMatrix probs;       // B x L, clamped sigmoid outputs
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

inline ForwardCache forward_cached(const MlpModel& m, const RealMatrix& x) {
  validate_shapes(m);
  if (x.cols() != m.inputs()) {
    throw DimensionError("forward: input has " + std::to_string(x.cols()) +
                         " columns, model expects D=" + std::to_string(m.inputs()));
  }
  if (!all_finite(x.flat())) throw InputError("forward: non-finite input feature");

  const std::size_t batch = x.rows(), h = m.hidden(), l = m.labels(), d = m.inputs();
  ForwardCache c{RealMatrix(batch, h), RealMatrix(batch, h), RealMatrix(batch, l)};
  std::vector<double> logits(l);
  for (std::size_t n = 0; n < batch; ++n) {
    auto pre = c.hidden_pre.row(n);
    std::copy(m.b1.begin(), m.b1.end(), pre.begin());
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x(n, i);
      auto wrow = m.w1.row(i);
      for (std::size_t j = 0; j < h; ++j) pre[j] += xi * wrow[j];
    }
    auto act = c.hidden.row(n);
    std::copy(m.b2.begin(), m.b2.end(), logits.begin());
    for (std::size_t j = 0; j < h; ++j) {
      act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
      if (act[j] == 0.0) continue;
      auto wrow = m.w2.row(j);
      for (std::size_t k = 0; k < l; ++k) logits[k] += act[j] * wrow[k];
    }
    auto out = c.probs.row(n);
    for (std::size_t k = 0; k < l; ++k) out[k] = clamp_prob(sigmoid(logits[k]));
  }
  return c;
}

/// Clamped output probabilities, B x L.
inline RealMatrix forward(const MlpModel& m, const RealMatrix& x) {
  return forward_cached(m, x).probs;
}

/// Parameter gradients given the loss gradient at the output logits.
/// The ReLU derivative at a pre-activation of exactly 0 is taken as 0.
inline ParamSet backward(const MlpModel& m, const RealMatrix& x, const ForwardCache& cache,
                         const RealMatrix& dlogits) {
  validate_shapes(m);
  const std::size_t batch = x.rows(), h = m.hidden(), l = m.labels(), d = m.inputs();
  if (x.cols() != d || cache.hidden.rows() != batch || cache.hidden.cols() != h ||
      dlogits.rows() != batch || dlogits.cols() != l) {
    throw DimensionError("backward: gradient/batch shape does not match the forward pass");
  }
  ParamSet g = zeros_like(m);
  std::vector<double> dhidden(h);
  for (std::size_t n = 0; n < batch; ++n) {
    auto dz = dlogits.row(n);
    auto act = cache.hidden.row(n);
    auto pre = cache.hidden_pre.row(n);
    for (std::size_t k = 0; k < l; ++k) g.b2[k] += dz[k];
    for (std::size_t j = 0; j < h; ++j) {
      auto gw2 = g.w2.row(j);
      auto w2 = m.w2.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < l; ++k) {
        gw2[k] += act[j] * dz[k];
        acc += w2[k] * dz[k];
      }
      dhidden[j] = pre[j] > 0.0 ? acc : 0.0;
      g.b1[j] += dhidden[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x(n, i);
      auto gw1 = g.w1.row(i);
      for (std::size_t j = 0; j < h; ++j) gw1[j] += xi * dhidden[j];
    }
  }
  return g;
}

/// Adam moments and step counter. Hyper-parameters are fixed at
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8 with bias correction.
struct OptimizerState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
};

inline OptimizerState make_optimizer(const MlpModel& m, double learning_rate) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a positive finite number");
  }
  return {zeros_like(m), zeros_like(m), 0, learning_rate};
}

inline void optimizer_step(MlpModel& m, const ParamSet& grads, OptimizerState& s) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  validate_shapes(grads);
  if (grads.w1.rows() != m.w1.rows() || grads.w1.cols() != m.w1.cols() ||
      grads.w2.cols() != m.w2.cols() || s.first_moment.w1.rows() != m.w1.rows() ||
      s.first_moment.w1.cols() != m.w1.cols() || s.first_moment.w2.cols() != m.w2.cols()) {
    throw DimensionError("optimizer_step: gradient or state shape does not match the model");
  }
  bool finite = true;
  for_each_block(grads, [&](auto block) { finite = finite && all_finite(block); });
  if (!finite) throw TrainingError("optimizer_step: non-finite gradient");

  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  const double lr = s.learning_rate;

  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m1,
                    std::span<double> m2) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g[i];
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double mhat = m1[i] / c1;
      const double vhat = m2[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  };
  update(m.w1.flat(), grads.w1.flat(), s.first_moment.w1.flat(), s.second_moment.w1.flat());
  update(m.b1, grads.b1, s.first_moment.b1, s.second_moment.b1);
  update(m.w2.flat(), grads.w2.flat(), s.first_moment.w2.flat(), s.second_moment.w2.flat());
  update(m.b2, grads.b2, s.first_moment.b2, s.second_moment.b2);
}

enum class LossKind { FullBce, AssumeNegative, EntropyMax };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::FullBce: return "full";
    case LossKind::AssumeNegative: return "an";
    case LossKind::EntropyMax: return "em";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "full" || s == "bce" || s == "full_bce") return LossKind::FullBce;
  if (s == "an") return LossKind::AssumeNegative;
  if (s == "em") return LossKind::EntropyMax;
  throw ConfigError("unknown loss kind '" + s + "' (expected full, an or em)");
}

struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 2e-3;
  int hidden_units = 64;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::FullBce;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be positive and finite");
    }
  }
};

// ---------------------------------------------------------------------------
// Checkpoint file:
//   spml-checkpoint v1 D=<d> H=<h> L=<l>
//   w1 <d*h values>   (row-major, one matrix row per line)
//   b1 ...
//   w2 ...
//   b2 ...
// Values are written with 17 significant digits, which round-trips doubles.

inline void write_checkpoint(std::ostream& os, const MlpModel& m) {
  validate_shapes(m);
  os << "spml-checkpoint v1 D=" << m.inputs() << " H=" << m.hidden() << " L=" << m.labels()
     << '\n';
  auto write_rows = [&os](const char* name, std::span<const double> v, std::size_t cols) {
    for (std::size_t i = 0; i < v.size(); i += cols) {
      os << name;
      for (std::size_t j = 0; j < cols; ++j) os << ' ' << format_double(v[i + j]);
      os << '\n';
    }
  };
  write_rows("w1", m.w1.flat(), m.hidden());
  write_rows("b1", m.b1, m.hidden());
  write_rows("w2", m.w2.flat(), m.labels());
  write_rows("b2", m.b2, m.labels());
}

inline MlpModel read_checkpoint(std::istream& is, const std::string& source = "<checkpoint>") {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError(source, lineno, "empty checkpoint");
  auto header = parse_header(line, "spml-checkpoint", source, lineno);
  const long d = header.require_int("D"), h = header.require_int("H"), l = header.require_int("L");
  if (d < 1 || h < 1 || l < 1) throw ParseError(source, lineno, "dimensions must be >= 1");
  MlpModel m{RealMatrix(d, h), std::vector<double>(h), RealMatrix(h, l), std::vector<double>(l)};

  auto read_rows = [&](const char* name, std::span<double> dst, std::size_t cols) {
    for (std::size_t i = 0; i < dst.size(); i += cols) {
      ++lineno;
      if (!std::getline(is, line)) throw ParseError(source, lineno, "truncated checkpoint");
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag != name) {
        throw ParseError(source, lineno, "expected '" + std::string(name) + "' row, got '" + tag + "'");
      }
      std::string tok;
      std::size_t j = 0;
      while (ls >> tok) {
        if (j >= cols) throw ParseError(source, lineno, "too many values");
        dst[i + j++] = parse_double(tok, source, lineno);
      }
      if (j != cols) {
        throw ParseError(source, lineno,
                         "expected " + std::to_string(cols) + " values, got " + std::to_string(j));
      }
    }
  };
  read_rows("w1", m.w1.flat(), m.hidden());
  read_rows("b1", m.b1, m.hidden());
  read_rows("w2", m.w2.flat(), m.labels());
  read_rows("b2", m.b2, m.labels());
  bool finite = true;
  for_each_block(m, [&](auto block) { finite = finite && all_finite(block); });
  if (!finite) throw ParseError(source, lineno, "non-finite parameter");
  return m;
}

inline void save_checkpoint(const std::string& path, const MlpModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(os, m);
  if (!os) throw Error("failed writing '" + path + "'");
}

inline MlpModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_checkpoint(is, path);
}

}  // namespace spml
