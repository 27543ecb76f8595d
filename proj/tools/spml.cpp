// spml: command-line driver for single-positive multi-label experiments.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spml/config_json.hpp"
#include "spml/spml.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// Bad flags or inputs that do not fit the command. Exit code 2.
class UsageError : public spml::Error {
 public:
  using Error::Error;
};

bool use_color() {
  static const bool enabled = std::getenv("SPML_NO_COLOR") == nullptr && isatty(STDERR_FILENO);
  return enabled;
}

void report_error(const std::string& msg) {
  if (use_color()) {
    std::cerr << "\033[1;31merror:\033[0m " << msg << '\n';
  } else {
    std::cerr << "error: " << msg << '\n';
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw spml::Error("cannot open '" + path.string() + "' for writing");
  os << content;
  if (!os) throw spml::Error("failed writing '" + path.string() + "'");
}

std::string tau_tag(double tau) { return spml::format_shortest(tau); }

// ---------------------------------------------------------------------------

struct TrainFlags {
  spml::TrainConfig cfg;
  double em_alpha = 0.1;

  void add_to(CLI::App* cmd, const std::string& prefix = "") {
    cmd->add_option("--" + prefix + "epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--" + prefix + "batch-size", cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--" + prefix + "lr", cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--" + prefix + "hidden", cfg.hidden_units, "Hidden units")->check(CLI::PositiveNumber);
  }
};

struct GenDataArgs {
  spml::SynthConfig synth;
  std::string out;
};

void add_synth_options(CLI::App* cmd, spml::SynthConfig& s) {
  cmd->add_option("--n", s.n, "Number of examples")->check(CLI::PositiveNumber);
  cmd->add_option("--d", s.d, "Feature dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--l", s.l, "Number of labels")->check(CLI::PositiveNumber);
  cmd->add_option("--pos-rate", s.target_positive_rate, "Target positive rate per label, in (0,1)")
      ->check(CLI::Validator(
          [](std::string& v) -> std::string {
            const double x = std::stod(v);
            return x > 0.0 && x < 1.0 ? std::string{} : "must lie in the open interval (0, 1)";
          },
          "(0,1)"));
  cmd->add_option("--noise", s.noise_std, "Label noise standard deviation")->check(CLI::NonNegativeNumber);
}

int cmd_gen_data(const GenDataArgs& a) {
  const spml::LabeledSet set = spml::generate_synthetic(a.synth);
  spml::save_dataset(a.out, set);
  std::cout << "N=" << set.features.rows() << " D=" << set.features.cols() << " L=" << set.labels.cols()
            << " avg_positives_per_row=" << spml::format_shortest(spml::avg_positives_per_example(set.labels))
            << '\n';
  return 0;
}

struct CorruptArgs {
  std::string in, out;
  std::uint64_t seed = 0;
};

int cmd_corrupt(const CorruptArgs& a) {
  const auto loaded = spml::load_dataset(a.in);
  if (loaded.kind != spml::DatasetKind::Full) throw UsageError("corrupt needs a kind=full dataset");
  const auto spml_set = spml::corrupt_to_single_positive(loaded.as_full(), a.seed);
  spml::save_dataset(a.out, spml_set);
  std::cout << "wrote " << spml_set.size() << " single-positive examples to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string in, out, loss = "an";
  TrainFlags train;
};

int cmd_train(TrainArgs a) {
  a.train.cfg.loss = spml::parse_loss_kind(a.loss);
  const auto loaded = spml::load_dataset(a.in);
  spml::TrainedModel trained;
  if (a.train.cfg.loss == spml::LossKind::FullBce) {
    if (loaded.kind != spml::DatasetKind::Full) throw UsageError("loss full needs a kind=full dataset");
    trained = spml::train_full(loaded.features, loaded.labels, a.train.cfg, spml::LabelSource::Full);
  } else {
    if (loaded.kind != spml::DatasetKind::Single) {
      throw UsageError("loss " + a.loss + " needs a kind=single dataset (run `corrupt` first)");
    }
    trained = spml::train_single_positive(loaded.as_single(), a.train.cfg, a.train.em_alpha);
  }
  spml::save_checkpoint(a.out, trained.model);
  std::cout << "loss=" << a.loss << " epochs=" << trained.epoch_losses.size()
            << " final_epoch_loss=" << spml::format_shortest(trained.epoch_losses.back()) << " -> " << a.out
            << '\n';
  return 0;
}

struct Algorithm1Args {
  std::string in, out_dir, eval_path;
  std::string teacher_loss = "em";
  double tau = 0.75;
  bool keep_observed = false;
  TrainFlags teacher, student;
};

int cmd_algorithm1(Algorithm1Args a) {
  const auto loaded = spml::load_dataset(a.in);
  if (loaded.kind != spml::DatasetKind::Single) throw UsageError("algorithm1 needs a kind=single dataset");
  a.teacher.cfg.loss = spml::parse_loss_kind(a.teacher_loss);
  a.student.cfg.loss = spml::LossKind::FullBce;
  a.student.cfg.seed = spml::derive_seed(a.teacher.cfg.seed, 14);
  const auto data = loaded.as_single();
  const auto result = spml::run_algorithm1(data, a.teacher.cfg, a.student.cfg, {a.tau, a.keep_observed},
                                           a.teacher.em_alpha);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  spml::save_checkpoint((dir / "teacher.ckpt").string(), result.teacher.model);
  spml::save_checkpoint((dir / "student.ckpt").string(), result.student.model);
  spml::save_dataset((dir / "pseudo.txt").string(), spml::LabeledSet{data.features, result.pseudo});
  std::cout << "tau=" << spml::format_shortest(a.tau)
            << " avg_pseudo_positives=" << spml::format_shortest(spml::avg_positives_per_example(result.pseudo))
            << '\n';
  if (!a.eval_path.empty()) {
    const auto test = spml::load_dataset(a.eval_path).as_full();
    std::cout << "teacher_map=" << spml::format_shortest(spml::test_map(result.teacher.model, test))
              << " student_map=" << spml::format_shortest(spml::test_map(result.student.model, test)) << '\n';
  }
  return 0;
}

struct SweepArgs {
  std::string config_path, dataset_path, out_dir = "run";
  spml::ExperimentConfig cfg;
  std::string teacher_loss;
  bool record_timing = false;
};

json run_manifest_paths(const fs::path& out, const std::vector<fs::path>& written) {
  json paths = json::array();
  for (const auto& p : written) paths.push_back(fs::relative(p, out).generic_string());
  return paths;
}

int cmd_sweep(SweepArgs a, const CLI::App& sub) {
  // Flags override the config file: load the file into a fresh config,
  // then re-apply every flag the user actually passed.
  spml::ExperimentConfig cfg;
  if (!a.config_path.empty()) {
    std::ifstream is(a.config_path);
    if (!is) throw UsageError("cannot open config '" + a.config_path + "'");
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw UsageError("config '" + a.config_path + "' is not valid JSON: " + e.what());
    }
    spml::update_from_json(cfg, j);
    if (j.contains("dataset") && a.dataset_path.empty()) a.dataset_path = j.at("dataset").get<std::string>();
  }
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--n")) cfg.synth.n = a.cfg.synth.n;
  if (given("--d")) cfg.synth.d = a.cfg.synth.d;
  if (given("--l")) cfg.synth.l = a.cfg.synth.l;
  if (given("--pos-rate")) cfg.synth.target_positive_rate = a.cfg.synth.target_positive_rate;
  if (given("--noise")) cfg.synth.noise_std = a.cfg.synth.noise_std;
  for (auto* t : {&cfg.teacher, &cfg.student}) {
    if (given("--epochs")) t->epochs = a.cfg.teacher.epochs;
    if (given("--batch-size")) t->batch_size = a.cfg.teacher.batch_size;
    if (given("--lr")) t->learning_rate = a.cfg.teacher.learning_rate;
    if (given("--hidden")) t->hidden_units = a.cfg.teacher.hidden_units;
  }
  if (given("--teacher-loss")) cfg.teacher.loss = spml::parse_loss_kind(a.teacher_loss);
  if (given("--tau")) cfg.tau_grid = a.cfg.tau_grid;
  if (given("--seeds")) cfg.seeds = a.cfg.seeds;
  if (given("--keep-observed")) cfg.keep_observed_positive = a.cfg.keep_observed_positive;
  if (given("--em-alpha")) cfg.em_alpha = a.cfg.em_alpha;
  if (given("--jobs")) cfg.jobs = a.cfg.jobs;
  if (!a.dataset_path.empty()) cfg.dataset = spml::load_dataset(a.dataset_path).as_full();
  cfg.validate();

  const std::string started = utc_now();
  const fs::path out(a.out_dir);
  std::vector<fs::path> written;
  std::vector<fs::path> created_dirs;
  auto make_dir = [&](const fs::path& d) {
    if (!fs::exists(d)) {
      fs::create_directories(d);
      created_dirs.push_back(d);
    }
  };
  try {
    const spml::SweepResult result = spml::run_sweep(cfg);

    make_dir(out);
    make_dir(out / "charts");
    make_dir(out / "checkpoints");
    make_dir(out / "pseudo");

    std::vector<fs::path> checkpoints, pseudo_files;
    for (const auto& s : result.artifacts) {
      const std::string base = "seed" + std::to_string(s.seed);
      auto ckpt = [&](const std::string& name, const spml::MlpModel& m) {
        const fs::path p = out / "checkpoints" / (base + "_" + name + ".ckpt");
        written.push_back(p);
        spml::save_checkpoint(p.string(), m);
        checkpoints.push_back(p);
      };
      ckpt("teacher", s.teacher);
      ckpt("an_baseline", s.an_baseline);
      ckpt("em_baseline", s.em_baseline);
      ckpt("full_supervision", s.skyline);
      for (const auto& c : s.cells) {
        ckpt("tau" + tau_tag(c.tau) + "_student", c.student);
        const fs::path p = out / "pseudo" / (base + "_tau" + tau_tag(c.tau) + ".txt");
        written.push_back(p);
        spml::save_dataset(p.string(), spml::LabeledSet{s.train_features, c.pseudo});
        pseudo_files.push_back(p);
      }
    }

    std::ostringstream csv;
    spml::write_results_csv(csv, result.rows, a.record_timing);
    const fs::path results_path = out / "results.csv";
    written.push_back(results_path);
    write_text(results_path, csv.str());

    const auto means = spml::mean_rows(result.rows);
    const fs::path map_chart = out / "charts" / "map_vs_tau.svg";
    const fs::path labels_chart = out / "charts" / "labels_vs_tau.svg";
    written.push_back(map_chart);
    write_text(map_chart, spml::map_vs_tau_chart(means));
    written.push_back(labels_chart);
    write_text(labels_chart, spml::labels_vs_tau_chart(means));

    json audit = json::array();
    for (const auto& r : result.audit) {
      audit.push_back({{"seed", r.seed}, {"role", r.role}, {"labels", spml::to_string(r.consumed)}});
    }
    json manifest = {
        {"tool", "spml"},
        {"version", kVersion},
        {"started_at", started},
        {"finished_at", utc_now()},
        {"config", spml::to_json(cfg)},
        {"dataset", a.dataset_path.empty() ? json(nullptr) : json(a.dataset_path)},
        {"record_timing", a.record_timing},
        {"artifacts",
         {{"results_csv", "results.csv"},
          {"charts", {"charts/map_vs_tau.svg", "charts/labels_vs_tau.svg"}},
          {"checkpoints", run_manifest_paths(out, checkpoints)},
          {"pseudo_labels", run_manifest_paths(out, pseudo_files)}}},
        {"label_audit", audit},
    };
    json timings = json::array();
    for (const auto& r : result.rows) {
      timings.push_back({{"seed", r.seed}, {"tau", r.tau}, {"wall_time_s", r.wall_time_s}});
    }
    manifest["cell_wall_time_s"] = timings;
    const fs::path manifest_path = out / "manifest.json";
    written.push_back(manifest_path);
    write_text(manifest_path, manifest.dump(2) + "\n");

    for (const auto& m : means) {
      std::cout << "tau=" << spml::format_shortest(m.tau) << "  pseudo_pos=" << spml::detail::fixed(m.avg_pseudo_positives, 3)
                << "  student=" << spml::detail::fixed(m.student_map, 4) << "  an=" << spml::detail::fixed(m.an_baseline_map, 4)
                << "  em=" << spml::detail::fixed(m.em_baseline_map, 4)
                << "  full=" << spml::detail::fixed(m.full_supervision_map, 4) << '\n';
    }
    std::cout << "results written to " << out.string() << '\n';
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    for (auto it = created_dirs.rbegin(); it != created_dirs.rend(); ++it) fs::remove(*it, ec);
    throw;
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, csv;
};

int cmd_eval(const EvalArgs& a) {
  const spml::MlpModel model = spml::load_checkpoint(a.checkpoint);
  const auto loaded = spml::load_dataset(a.data);
  if (loaded.kind != spml::DatasetKind::Full) throw UsageError("eval needs a kind=full dataset (full labels)");
  if (loaded.features.cols() != model.inputs() || loaded.num_labels != model.labels()) {
    throw UsageError("dimension mismatch: checkpoint expects D=" + std::to_string(model.inputs()) +
                     " L=" + std::to_string(model.labels()) + ", dataset has D=" +
                     std::to_string(loaded.features.cols()) + " L=" + std::to_string(loaded.num_labels));
  }
  const auto report = spml::mean_average_precision(spml::forward(model, loaded.features), loaded.labels);
  std::cout << "map=" << spml::format_shortest(report.map) << " classes_evaluated=" << report.n_classes_evaluated
            << '/' << report.per_class_ap.size() << '\n';
  for (std::size_t k = 0; k < report.per_class_ap.size(); ++k) {
    const auto& ap = report.per_class_ap[k];
    std::cout << "  class " << k << ": " << (ap ? spml::format_shortest(*ap) : "undefined") << '\n';
  }
  if (!a.csv.empty()) {
    std::ostringstream os;
    os << "class,ap\r\n";
    for (std::size_t k = 0; k < report.per_class_ap.size(); ++k) {
      const auto& ap = report.per_class_ap[k];
      os << k << ',' << (ap ? spml::format_shortest(*ap) : "") << "\r\n";
    }
    write_text(a.csv, os.str());
  }
  return 0;
}

struct PlotArgs {
  std::string results, out_dir;
};

int cmd_plot(const PlotArgs& a) {
  std::ifstream is(a.results, std::ios::binary);
  if (!is) throw UsageError("cannot open '" + a.results + "'");
  const auto means = spml::tau_means(spml::read_results_csv(is, a.results));
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_text(dir / "map_vs_tau.svg", spml::map_vs_tau_chart(means));
  write_text(dir / "labels_vs_tau.svg", spml::labels_vs_tau_chart(means));
  std::cout << "charts written to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-positive multi-label learning with pseudo multi-labels"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic fully-labeled dataset");
  add_synth_options(gen_cmd, gen.synth);
  gen_cmd->add_option("--seed", gen.synth.seed, "Random seed");
  gen_cmd->add_option("-o,--out", gen.out, "Output dataset file")->required();

  CorruptArgs corrupt;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Keep one uniformly drawn positive label per example");
  corrupt_cmd->add_option("-i,--in", corrupt.in, "kind=full dataset")->required()->check(CLI::ExistingFile);
  corrupt_cmd->add_option("-o,--out", corrupt.out, "Output kind=single dataset")->required();
  corrupt_cmd->add_option("--seed", corrupt.seed, "Random seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one model with the full, an or em loss");
  train_cmd->add_option("-i,--in", train.in, "Training dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--out", train.out, "Output checkpoint")->required();
  train_cmd->add_option("--loss", train.loss, "full | an | em")
      ->check(CLI::IsMember({"full", "an", "em"}));
  train_cmd->add_option("--seed", train.train.cfg.seed, "Random seed");
  train_cmd->add_option("--em-alpha", train.train.em_alpha, "Entropy weight for em")->check(CLI::NonNegativeNumber);
  train.train.add_to(train_cmd);

  Algorithm1Args alg;
  auto* alg_cmd = app.add_subcommand("algorithm1", "Teacher on single positives, pseudo labels, student");
  alg_cmd->add_option("-i,--in", alg.in, "kind=single training dataset")->required()->check(CLI::ExistingFile);
  alg_cmd->add_option("-o,--out", alg.out_dir, "Output directory")->required();
  alg_cmd->add_option("--tau", alg.tau, "Pseudo-label threshold in [0,1)")->check(CLI::Range(0.0, 0.999999999));
  alg_cmd->add_flag("--keep-observed", alg.keep_observed, "Keep the observed positive in the pseudo labels");
  alg_cmd->add_option("--teacher-loss", alg.teacher_loss, "an | em")->check(CLI::IsMember({"an", "em"}));
  alg_cmd->add_option("--seed", alg.teacher.cfg.seed, "Random seed");
  alg_cmd->add_option("--em-alpha", alg.teacher.em_alpha, "Entropy weight for em")->check(CLI::NonNegativeNumber);
  alg_cmd->add_option("--eval", alg.eval_path, "kind=full dataset to report test MAP on")->check(CLI::ExistingFile);
  alg.teacher.add_to(alg_cmd, "teacher-");
  alg.student.add_to(alg_cmd, "student-");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run Algorithm 1 over a tau grid with baselines");
  sweep_cmd->add_option("--config", sweep.config_path, "JSON config file (flags override)")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--dataset", sweep.dataset_path, "kind=full dataset instead of synthetic data")
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("-o,--out", sweep.out_dir, "Run directory");
  add_synth_options(sweep_cmd, sweep.cfg.synth);
  sweep_cmd->add_option("--epochs", sweep.cfg.teacher.epochs, "Epochs for every model")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--batch-size", sweep.cfg.teacher.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--lr", sweep.cfg.teacher.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--hidden", sweep.cfg.teacher.hidden_units, "Hidden units")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--teacher-loss", sweep.teacher_loss, "an | em")->check(CLI::IsMember({"an", "em"}));
  sweep_cmd->add_option("--tau", sweep.cfg.tau_grid, "Threshold grid")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.cfg.seeds, "Experiment seeds")->delimiter(',');
  sweep_cmd->add_flag("--keep-observed", sweep.cfg.keep_observed_positive, "Keep observed positives");
  sweep_cmd->add_option("--em-alpha", sweep.cfg.em_alpha, "Entropy weight for em")->check(CLI::NonNegativeNumber);
  sweep_cmd->add_option("--jobs", sweep.cfg.jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--record-timing", sweep.record_timing, "Write measured wall_time_s into results.csv");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Test MAP of a checkpoint on a kind=full dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "kind=full dataset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--csv", eval.csv, "Write per-class AP to this CSV");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Re-render charts from an existing results.csv");
  plot_cmd->add_option("-i,--in", plot.results, "results.csv")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("-o,--out", plot.out_dir, "Chart directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*corrupt_cmd) return cmd_corrupt(corrupt);
    if (*train_cmd) return cmd_train(train);
    if (*alg_cmd) return cmd_algorithm1(alg);
    if (*sweep_cmd) return cmd_sweep(sweep, *sweep_cmd);
    if (*eval_cmd) return cmd_eval(eval);
    if (*plot_cmd) return cmd_plot(plot);
  } catch (const UsageError& e) {
    report_error(e.what());
    return 2;
  } catch (const spml::ConfigError& e) {
    report_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(e.what());
    return 1;
  }
  return 2;
}
