#pragma once

// Command-line front end. `run` is the whole program; tools/phenofuse.cpp only
// forwards argv to it.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
// Flags override --config file values, which override defaults.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phenofuse/embedding_store.hpp"
#include "phenofuse/error.hpp"
#include "phenofuse/eval.hpp"
#include "phenofuse/fusion.hpp"
#include "phenofuse/io.hpp"
#include "phenofuse/level_prior.hpp"
#include "phenofuse/nn.hpp"
#include "phenofuse/synth.hpp"
#include "phenofuse/training.hpp"

namespace phenofuse::cli {

namespace fs = std::filesystem;
using io::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct TrainFlags {
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t epochs = 10;
  bool no_shuffle = false;
};

struct Options {
  std::uint64_t seed = 7;

  std::string cache;
  std::string out;
  std::vector<std::string> hold_out;

  // synth
  int plants = 3;
  int days = 20;
  double noise = 0.0;
  std::string priors_out;

  // train / train-level
  std::string mode = "multimodal";
  std::string priors;
  TrainFlags train;
  TrainFlags level_train{1e-3, 64, 60, false};
  bool save_optimizer = false;

  // eval / sensitivity
  std::string model;
  std::string level_source = "metadata";
  std::string level_model;
  std::vector<double> percentages = {0, 12.5, 25, 37.5, 50, 62.5, 75, 87.5, 95.8};
  std::size_t trials = 5;

  // report
  std::vector<std::string> eval_reports;
  std::vector<std::string> labels;
  std::vector<std::string> curves;

  // validate-cache
  std::string report_path;
};

class Logger {
 public:
  explicit Logger(std::ostream& err) : err_(err) {}

  void info(const std::string& msg) const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
    err_ << "[" << stamp << "] " << msg << "\n";
  }

 private:
  std::ostream& err_;
};

namespace detail {

inline TrainConfig train_config(const Options& o, const TrainFlags& f) {
  TrainConfig c;
  c.learning_rate = f.lr;
  c.batch_size = f.batch;
  c.epochs = f.epochs;
  c.seed = o.seed;
  c.shuffle = !f.no_shuffle;
  return c;
}

inline json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"shuffle", c.shuffle}};
}

inline json history_json(const std::vector<EpochStats>& history) {
  json h = json::array();
  for (const auto& e : history) h.push_back({{"loss", e.loss}, {"per_head", e.per_head}});
  return h;
}

inline std::vector<std::size_t> training_records(const EmbeddingCache& cache, const Options& o) {
  return split_by_plant(cache.records, parse_hold_out(o.hold_out)).train;
}

/// A loaded model with everything needed to predict on level groups.
struct LoadedPredictor {
  nn::Checkpoint checkpoint;
  std::optional<PriorTable> priors;
  std::optional<nn::Checkpoint> level_model;
  ModelMode mode = ModelMode::multimodal;
  LevelSource level_source = LevelSource::metadata;

  std::vector<Prediction> operator()(const EmbeddingCache& cache, std::span<const LevelGroup> groups) const {
    if (mode == ModelMode::unimodal) return predict_unimodal_groups(checkpoint.model, cache, groups);
    const LevelResolver resolver = level_source == LevelSource::regressor
                                       ? LevelResolver::from_regressor(level_model->model)
                                       : LevelResolver::metadata();
    return predict_multimodal_groups(checkpoint.model, groups, cache, *priors, resolver);
  }

  json identity(const Options& o) const {
    json id = {{"mode", checkpoint.mode},
               {"checkpoint", o.model},
               {"layer_sizes", checkpoint.model.spec.layer_sizes},
               {"seed", checkpoint.model.seed}};
    if (mode == ModelMode::multimodal) id["level_source"] = std::string(to_string(level_source));
    return id;
  }
};

inline std::shared_ptr<LoadedPredictor> load_predictor(const Options& o) {
  auto p = std::make_shared<LoadedPredictor>();
  p->checkpoint = nn::load_checkpoint(o.model);
  p->mode = parse_model_mode(p->checkpoint.mode);
  if (p->mode == ModelMode::multimodal) {
    std::string priors_path = o.priors;
    if (priors_path.empty() && p->checkpoint.extra.contains("priors")) {
      priors_path = p->checkpoint.extra["priors"].get<std::string>();
    }
    if (priors_path.empty()) throw InvalidArgument("multimodal model needs --priors");
    p->priors = load_priors(priors_path);
    if (!p->priors->normalized) p->priors = normalize_priors(*p->priors);
    if (o.level_source == "regressor") {
      if (o.level_model.empty()) throw InvalidArgument("--level-source regressor requires --level-model");
      p->level_model = nn::load_checkpoint(o.level_model);
      if (p->level_model->mode != "level") {
        throw InvalidArgument("--level-model is a '" + p->level_model->mode + "' checkpoint, expected 'level'");
      }
      p->level_source = LevelSource::regressor;
    } else if (o.level_source != "metadata") {
      throw InvalidArgument("--level-source must be metadata or regressor");
    }
  }
  return p;
}

inline json finding_json(const Finding& f) {
  json j = {{"kind", std::string(to_string(f.kind))}, {"message", f.message}};
  if (f.record) j["record"] = *f.record;
  if (f.row) j["row"] = *f.row;
  if (f.column) j["column"] = *f.column;
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

inline int cmd_validate_cache(const Options& o, std::ostream& out, const Logger&) {
  EmbeddingCache cache;
  try {
    cache = read_cache(o.cache);
  } catch (const FormatError& e) {
    out << "invalid cache: " << e.what() << "\n";
    return kExitUsage;
  }
  const auto report = validate_cache(cache);
  json j = {{"cache", o.cache}, {"records", cache.records.size()}, {"passed", report.passed()}};
  j["findings"] = json::array();
  for (const auto& f : report.findings) j["findings"].push_back(detail::finding_json(f));
  if (!o.report_path.empty()) io::write_json(o.report_path, j);
  out << o.cache << ": " << cache.records.size() << " records, " << report.findings.size() << " findings\n";
  for (const auto& f : report.findings) out << "  " << to_string(f.kind) << ": " << f.message << "\n";
  return report.passed() ? kExitOk : kExitUsage;
}

inline int cmd_synth(const Options& o, std::ostream& out, const Logger& log) {
  SynthSpec spec;
  spec.n_plants = o.plants;
  spec.n_days = o.days;
  spec.noise_std = o.noise;
  spec.seed = o.seed;
  const auto result = generate_synthetic_cache(spec);
  write_cache(result.cache, o.out);
  write_truth_csv(result.cache, io::with_suffix(o.out, ".truth.csv"));
  const std::string priors_base = o.priors_out.empty() ? o.out : o.priors_out;
  save_priors(synthetic_priors(o.seed), priors_base);
  log.info("wrote " + std::to_string(result.cache.records.size()) + " synthetic records");
  out << "cache: " << o.out << "\npriors: " << priors_base << "\n";
  return kExitOk;
}

inline int cmd_train_level(const Options& o, std::ostream& out, const Logger& log) {
  const auto cache = read_cache(o.cache);
  const auto records = detail::training_records(cache, o);
  const auto groups = group_by_level(cache, records);
  const TrainConfig config = detail::train_config(o, o.level_train);
  auto result = train_level_regressor(cache, groups, config);

  std::size_t hits = 0;
  for (const auto& g : groups) {
    hits += predict_level(result.model, aggregate_group(cache, g)).quantized == g.key.level ? 1 : 0;
  }
  const double accuracy = static_cast<double>(hits) / static_cast<double>(groups.size());
  log.info("level regressor training accuracy " + io::format_fixed(100.0 * accuracy, 2) + "%");

  nn::Checkpoint ckpt{std::move(result.model), "level", std::nullopt, json::object()};
  if (o.save_optimizer) ckpt.adam = std::move(result.adam);
  ckpt.extra = {{"config", detail::train_config_json(config)},
                {"cache", o.cache},
                {"hold_out", o.hold_out},
                {"history", detail::history_json(result.history)},
                {"train_accuracy", accuracy}};
  nn::save_checkpoint(ckpt, o.out);
  out << "level model: " << o.out << " (train accuracy " << io::format_fixed(100.0 * accuracy, 2) << "%)\n";
  return kExitOk;
}

inline int cmd_train(const Options& o, std::ostream& out, const Logger& log) {
  const ModelMode mode = parse_model_mode(o.mode);
  const auto cache = read_cache(o.cache);
  const auto records = detail::training_records(cache, o);
  const TrainConfig config = detail::train_config(o, o.train);
  json extra = {{"config", detail::train_config_json(config)}, {"cache", o.cache}, {"hold_out", o.hold_out}};

  TrainingSet set;
  if (mode == ModelMode::unimodal) {
    set = unimodal_training_set(cache, records);
  } else {
    if (o.priors.empty()) throw InvalidArgument("train --mode multimodal requires --priors");
    auto priors = load_priors(o.priors);
    if (!priors.normalized) priors = normalize_priors(std::move(priors));
    set = multimodal_training_set(cache, group_by_level(cache, records), priors);
    extra["priors"] = fs::absolute(o.priors).lexically_normal().string();
  }
  log.info("training " + std::string(to_string(mode)) + " model on " + std::to_string(set.inputs.rows()) +
           " samples");
  auto result = train_model(mode, set, config);
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    log.info("epoch " + std::to_string(e + 1) + " loss " + io::format_sig6(result.history[e].loss));
  }
  extra["history"] = detail::history_json(result.history);
  nn::Checkpoint ckpt{std::move(result.model), std::string(to_string(mode)), std::nullopt, std::move(extra)};
  if (o.save_optimizer) ckpt.adam = std::move(result.adam);
  nn::save_checkpoint(ckpt, o.out);
  out << to_string(mode) << " model: " << o.out << "\n";
  return kExitOk;
}

inline json eval_config_json(const Options& o) {
  return {{"cache", o.cache},
          {"model", o.model},
          {"hold_out", o.hold_out},
          {"priors", o.priors},
          {"level_source", o.level_source},
          {"level_model", o.level_model},
          {"seed", o.seed}};
}

inline std::vector<LevelGroup> test_groups(const EmbeddingCache& cache, const Options& o) {
  if (o.hold_out.empty()) throw InvalidArgument("--hold-out is required (e.g. mustard:3)");
  const auto split = split_by_plant(cache.records, parse_hold_out(o.hold_out));
  return group_by_level(cache, split.test);
}

inline int cmd_eval(const Options& o, std::ostream& out, const Logger& log) {
  const auto cache = read_cache(o.cache);
  const auto groups = test_groups(cache, o);
  const auto predictor = detail::load_predictor(o);
  auto report = evaluate([&](std::span<const LevelGroup> g) { return (*predictor)(cache, g); }, cache, groups);
  report.model = predictor->identity(o);
  report.config = eval_config_json(o);
  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  emit_report(report, ReportFormat::json, dir / "report.json");
  emit_report(report, ReportFormat::csv, dir / "report.csv");
  emit_report(report, ReportFormat::markdown, dir / "report.md");
  log.info("evaluated " + std::to_string(groups.size()) + " level groups");
  out << "MAE age " << io::format_fixed(report.mean_mae_age, 4) << ", MAE leaf "
      << io::format_fixed(report.mean_mae_leaf, 4) << " -> " << (dir / "report.json").string() << "\n";
  return kExitOk;
}

inline int cmd_sensitivity(const Options& o, std::ostream& out, const Logger& log) {
  const auto cache = read_cache(o.cache);
  const auto groups = test_groups(cache, o);
  const auto predictor = detail::load_predictor(o);
  auto curve = sensitivity_sweep([&](std::span<const LevelGroup> g) { return (*predictor)(cache, g); }, cache, groups,
                                 o.percentages, o.trials, o.seed);
  curve.model = predictor->identity(o);
  curve.config = eval_config_json(o);
  curve.config["percentages"] = o.percentages;
  curve.config["trials"] = o.trials;
  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  emit_report(curve, ReportFormat::csv, dir / "sensitivity.csv");
  emit_report(curve, ReportFormat::json, dir / "sensitivity.json");
  emit_report(curve, ReportFormat::markdown, dir / "sensitivity.md");
  log.info("swept " + std::to_string(curve.points.size()) + " removal levels");
  out << "sensitivity curve -> " << (dir / "sensitivity.csv").string() << "\n";
  return kExitOk;
}

inline int cmd_report(const Options& o, std::ostream& out, const Logger&) {
  if (o.eval_reports.empty() && o.curves.empty()) {
    throw InvalidArgument("report needs at least one --eval or --sensitivity input");
  }
  auto label_for = [&](std::size_t i, const json& model) {
    if (i < o.labels.size()) return o.labels[i];
    return model.contains("mode") ? capitalize(model["mode"].get<std::string>()) : "Model " + std::to_string(i + 1);
  };
  json summary = {{"evaluations", json::array()}, {"sensitivity", json::array()}};
  std::string md = "# Summary\n\n";
  if (!o.eval_reports.empty()) {
    std::vector<std::pair<std::string, EvalReport>> rows;
    for (std::size_t i = 0; i < o.eval_reports.size(); ++i) {
      auto r = eval_report_from_json(io::read_json(o.eval_reports[i]));
      const auto label = label_for(i, r.model);
      summary["evaluations"].push_back({{"label", label},
                                        {"source", o.eval_reports[i]},
                                        {"mean_mae_age", r.mean_mae_age},
                                        {"mean_mae_leaf", r.mean_mae_leaf}});
      rows.emplace_back(label, std::move(r));
    }
    md += "## Mean absolute error\n\n" + markdown_mae_table(rows) + "\n";
  }
  if (!o.curves.empty()) {
    md += "## Degradation from full views to the last removal level\n\n| Approach | Age (%) | Leaf Count (%) | Mean (%) | Robustness gain vs first (%) |\n|---|---:|---:|---:|---:|\n";
    std::optional<double> baseline;
    for (std::size_t i = 0; i < o.curves.size(); ++i) {
      const auto curve = sensitivity_curve_from_json(io::read_json(o.curves[i]));
      const auto d = summarize_degradation(curve);
      const auto label = label_for(o.eval_reports.size() + i, curve.model);
      json entry = {{"label", label},
                    {"source", o.curves[i]},
                    {"degradation_age", d.age},
                    {"degradation_leaf", d.leaf},
                    {"degradation_mean", d.mean}};
      std::string gain_cell = "-";
      if (!baseline) {
        baseline = d.mean;
      } else if (*baseline > 0.0) {
        const double gain = robustness_gain(*baseline, d.mean);
        entry["robustness_gain"] = gain;
        gain_cell = io::format_fixed(gain, 1);
      }
      summary["sensitivity"].push_back(entry);
      md += "| " + label + " | " + io::format_fixed(d.age, 2) + " | " + io::format_fixed(d.leaf, 2) + " | " +
            io::format_fixed(d.mean, 2) + " | " + gain_cell + " |\n";
    }
  }
  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  io::write_json(dir / "summary.json", summary);
  io::atomic_write(dir / "summary.md", md);
  out << md;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

namespace detail {

inline json resolved_config(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "--config") continue;
    const auto& res = opt->results();
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    if (res.empty()) {
      j[name] = opt->get_default_str();
    } else if (res.size() == 1) {
      j[name] = res.front();
    } else {
      j[name] = res;
    }
  }
  return j;
}

inline void add_train_flags(CLI::App* sub, Options& o, TrainFlags& f) {
  sub->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  sub->add_option("--batch", f.batch, "mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--epochs", f.epochs, "training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_flag("--no-shuffle", f.no_shuffle, "keep sample order fixed across epochs");
  sub->add_option("--hold-out", o.hold_out, "crop:plant_id excluded from training (repeatable)");
  sub->add_flag("--save-optimizer", o.save_optimizer, "store Adam moments in the checkpoint");
}

inline void add_predict_flags(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "model checkpoint base path")->required();
  sub->add_option("--cache", o.cache, "embedding cache base path")->required();
  sub->add_option("--hold-out", o.hold_out, "crop:plant_id evaluated as test data (repeatable)")->required();
  sub->add_option("--priors", o.priors, "prior table base path (defaults to the one used in training)");
  sub->add_option("--level-source", o.level_source, "metadata | regressor")
      ->capture_default_str()
      ->check(CLI::IsMember({"metadata", "regressor"}));
  sub->add_option("--level-model", o.level_model, "level regressor checkpoint for --level-source regressor");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Level-aware multi-view plant age and leaf-count regression"};
  app.name("phenofuse");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key = value config file (flags override it)");
  app.add_option("--seed", o.seed, "random seed")->capture_default_str();

  auto* validate = app.add_subcommand("validate-cache", "check a cache for non-finite values, duplicates, ranges");
  validate->add_option("cache", o.cache, "cache base path")->required();
  validate->add_option("--report", o.report_path, "write findings as JSON");

  auto* synth = app.add_subcommand("synth", "generate a synthetic cache and prior table");
  synth->add_option("--out", o.out, "output cache base path")->required();
  synth->add_option("--plants", o.plants, "plants per crop")->capture_default_str();
  synth->add_option("--days", o.days, "days per plant")->capture_default_str();
  synth->add_option("--noise", o.noise, "Gaussian noise std")->capture_default_str();
  synth->add_option("--priors-out", o.priors_out, "prior table base path (default: --out)");

  auto* train_level = app.add_subcommand("train-level", "train the auxiliary level regressor");
  train_level->add_option("--cache", o.cache, "embedding cache base path")->required();
  train_level->add_option("--out", o.out, "checkpoint base path")->required();
  detail::add_train_flags(train_level, o, o.level_train);

  auto* train = app.add_subcommand("train", "train a unimodal or multimodal regressor");
  train->add_option("--mode", o.mode, "unimodal | multimodal")
      ->capture_default_str()
      ->check(CLI::IsMember({"unimodal", "multimodal"}));
  train->add_option("--cache", o.cache, "embedding cache base path")->required();
  train->add_option("--priors", o.priors, "prior table base path (multimodal)");
  train->add_option("--out", o.out, "checkpoint base path")->required();
  detail::add_train_flags(train, o, o.train);

  auto* eval = app.add_subcommand("eval", "evaluate a model on held-out plants");
  detail::add_predict_flags(eval, o);

  auto* sens = app.add_subcommand("sensitivity", "MAE as views are removed at inference");
  detail::add_predict_flags(sens, o);
  sens->add_option("--percentages", o.percentages, "removal percentages in [0, 100)")
      ->delimiter(',')
      ->capture_default_str();
  sens->add_option("--trials", o.trials, "seeded trials per percentage")->capture_default_str()->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "combine evaluation reports and sensitivity curves");
  report->add_option("--eval", o.eval_reports, "report.json files");
  report->add_option("--sensitivity", o.curves, "sensitivity.json files (first is the baseline)");
  report->add_option("--label", o.labels, "row labels, in input order");
  report->add_option("--out", o.out, "output directory")->capture_default_str();

  std::vector<const char*> argv;
  argv.push_back("phenofuse");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const Logger log(err);
  CLI::App* sub = app.get_subcommands().front();

  json config = detail::resolved_config(*sub);
  config["seed"] = o.seed;
  log.info(sub->get_name() + " config: " + config.dump());

  try {
    if (sub == validate) return cmd_validate_cache(o, out, log);
    if (sub == synth) return cmd_synth(o, out, log);
    if (sub == train_level) return cmd_train_level(o, out, log);
    if (sub == train) return cmd_train(o, out, log);
    if (sub == eval) return cmd_eval(o, out, log);
    if (sub == sens) return cmd_sensitivity(o, out, log);
    if (sub == report) return cmd_report(o, out, log);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == FormatError::Kind::io ? kExitRuntime : kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace phenofuse::cli
