#pragma once

// Plant-held-out evaluation, view-removal sensitivity sweeps, and report
// emission (json / csv / markdown).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <bit>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phenofuse/embedding_store.hpp"
#include "phenofuse/error.hpp"
#include "phenofuse/fusion.hpp"
#include "phenofuse/io.hpp"

namespace phenofuse {

// ---------------------------------------------------------------------------
// Plant split
// ---------------------------------------------------------------------------

struct PlantSplit {
  std::map<Crop, int> held_out;
  std::vector<std::size_t> train;  // record indices
  std::vector<std::size_t> test;
};

/// Every record of a held-out plant goes to test; everything else to train.
/// Crops without an entry in `held_out` are entirely training data.
inline PlantSplit split_by_plant(const std::vector<ViewRecord>& records, const std::map<Crop, int>& held_out) {
  for (const auto& [crop, plant] : held_out) {
    const bool exists = std::any_of(records.begin(), records.end(), [&](const ViewRecord& r) {
      return r.crop == crop && r.plant_id == plant;
    });
    if (!exists) {
      throw InvalidArgument("held-out plant " + std::to_string(plant) + " does not exist for crop '" +
                            crop.name() + "'");
    }
  }
  PlantSplit split;
  split.held_out = held_out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = held_out.find(records[i].crop);
    if (it != held_out.end() && it->second == records[i].plant_id) {
      split.test.push_back(i);
    } else {
      split.train.push_back(i);
    }
  }
  return split;
}

/// Parses "mustard:3" style hold-out specs.
inline std::map<Crop, int> parse_hold_out(const std::vector<std::string>& specs) {
  std::map<Crop, int> out;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw InvalidArgument("hold-out must look like crop:plant_id, got '" + s + "'");
    }
    const auto plant = detail::parse_int(s.substr(colon + 1));
    if (!plant || *plant < 1) throw InvalidArgument("bad plant id in hold-out '" + s + "'");
    out[Crop(s.substr(0, colon))] = static_cast<int>(*plant);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace detail {
inline void check_metric_inputs(std::span<const double> preds, std::span<const double> targets) {
  if (preds.empty()) throw InvalidArgument("metric over empty vectors");
  if (preds.size() != targets.size()) throw InvalidArgument("metric: length mismatch");
}
}  // namespace detail

inline double mae(std::span<const double> preds, std::span<const double> targets) {
  detail::check_metric_inputs(preds, targets);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) acc += std::abs(preds[i] - targets[i]);
  return acc / static_cast<double>(preds.size());
}

inline double rmse(std::span<const double> preds, std::span<const double> targets) {
  detail::check_metric_inputs(preds, targets);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - targets[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(preds.size()));
}

inline double mean_over_crops(std::span<const double> per_crop) {
  if (per_crop.empty()) throw InvalidArgument("mean_over_crops: no crops");
  return std::accumulate(per_crop.begin(), per_crop.end(), 0.0) / static_cast<double>(per_crop.size());
}

/// (final - initial) / initial * 100.
inline double degradation(double initial_mae, double final_mae) {
  if (!(initial_mae > 0.0)) throw InvalidArgument("degradation: initial MAE must be positive");
  return (final_mae - initial_mae) / initial_mae * 100.0;
}

/// Relative reduction of the candidate's degradation versus the baseline's.
inline double robustness_gain(double baseline_degradation, double candidate_degradation) {
  if (!(baseline_degradation > 0.0)) throw InvalidArgument("robustness_gain: baseline degradation must be positive");
  return (baseline_degradation - candidate_degradation) / baseline_degradation * 100.0;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Predicts (age, leaf) for one (possibly view-reduced) level group.
using GroupPredictor = std::function<Prediction(const LevelGroup&)>;

/// Predicts a batch of groups at once, one Prediction per group in order.
using BatchPredictor = std::function<std::vector<Prediction>(std::span<const LevelGroup>)>;

inline BatchPredictor per_group(GroupPredictor predict) {
  return [predict = std::move(predict)](std::span<const LevelGroup> groups) {
    std::vector<Prediction> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(predict(g));
    return out;
  };
}

struct CropMetrics {
  std::string crop;
  std::size_t samples = 0;
  double mae_age = 0.0;
  double rmse_age = 0.0;
  double mae_leaf = 0.0;
  double rmse_leaf = 0.0;

  friend bool operator==(const CropMetrics&, const CropMetrics&) = default;
};

struct EvalReport {
  io::json model = io::json::object();   // identity of the evaluated model
  io::json config = io::json::object();  // resolved run configuration
  std::vector<CropMetrics> crops;        // sorted by crop name
  double mean_mae_age = 0.0;
  double mean_mae_leaf = 0.0;
  double mean_rmse_age = 0.0;
  double mean_rmse_leaf = 0.0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per-crop metrics over groups; every group counts once.
inline std::vector<CropMetrics> crop_metrics(const EmbeddingCache& cache, const std::vector<LevelGroup>& groups,
                                             std::span<const Prediction> preds) {
  std::map<Crop, std::vector<std::size_t>> by_crop;
  for (std::size_t g = 0; g < groups.size(); ++g) by_crop[groups[g].key.crop].push_back(g);
  std::vector<CropMetrics> out;
  for (const auto& [crop, idx] : by_crop) {
    std::vector<double> pa, ta, pl, tl;
    for (std::size_t g : idx) {
      const auto t = group_targets(cache, groups[g]);
      pa.push_back(preds[g].age);
      ta.push_back(t.age);
      pl.push_back(preds[g].leaf_count);
      tl.push_back(t.leaf_count);
    }
    out.push_back({crop.name(), idx.size(), mae(pa, ta), rmse(pa, ta), mae(pl, tl), rmse(pl, tl)});
  }
  return out;
}

inline EvalReport evaluate(const BatchPredictor& predict, const EmbeddingCache& cache,
                           const std::vector<LevelGroup>& groups) {
  if (groups.empty()) throw InvalidArgument("evaluate: no test groups");
  const std::vector<Prediction> preds = predict(groups);
  if (preds.size() != groups.size()) throw InvalidArgument("evaluate: predictor returned wrong count");
  EvalReport report;
  report.crops = crop_metrics(cache, groups, preds);
  std::vector<double> ma, ml, ra, rl;
  for (const auto& c : report.crops) {
    ma.push_back(c.mae_age);
    ml.push_back(c.mae_leaf);
    ra.push_back(c.rmse_age);
    rl.push_back(c.rmse_leaf);
  }
  report.mean_mae_age = mean_over_crops(ma);
  report.mean_mae_leaf = mean_over_crops(ml);
  report.mean_rmse_age = mean_over_crops(ra);
  report.mean_rmse_leaf = mean_over_crops(rl);
  return report;
}

// ---------------------------------------------------------------------------
// Sensitivity to missing views
// ---------------------------------------------------------------------------

struct SensitivityPoint {
  double removal_percent = 0.0;
  double mae_age = 0.0;
  double mae_leaf = 0.0;
  std::size_t trials = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const SensitivityPoint&, const SensitivityPoint&) = default;
};

struct SensitivityCurve {
  io::json model = io::json::object();
  io::json config = io::json::object();
  std::vector<SensitivityPoint> points;

  friend bool operator==(const SensitivityCurve&, const SensitivityCurve&) = default;
};

/// Views removed from a group of `view_count` at `percent`: rounded to the
/// nearest view, never removing the last one.
inline std::size_t views_to_remove(std::size_t view_count, double percent) {
  const auto removed = static_cast<std::size_t>(std::llround(percent / 100.0 * static_cast<double>(view_count)));
  return view_count == 0 ? 0 : std::min(removed, view_count - 1);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream per (seed, percentage, trial).
inline std::uint64_t sub_seed(std::uint64_t seed, double percent, std::size_t trial) {
  return splitmix64(seed ^ splitmix64(std::bit_cast<std::uint64_t>(percent) ^ splitmix64(trial)));
}

/// Keeps a uniformly random subset of `keep` views, preserving angle order.
inline LevelGroup subsample_group(const LevelGroup& g, std::size_t keep, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(g.rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  LevelGroup out;
  out.key = g.key;
  for (std::size_t i : idx) {
    out.rows.push_back(g.rows[i]);
    out.records.push_back(g.records[i]);
  }
  out.complete = static_cast<int>(out.rows.size()) == kViewsPerLevel;
  return out;
}

inline std::pair<double, double> mean_crop_maes(const EmbeddingCache& cache, const std::vector<LevelGroup>& groups,
                                                const std::vector<Prediction>& preds) {
  const auto metrics = crop_metrics(cache, groups, preds);
  std::vector<double> a, l;
  for (const auto& m : metrics) {
    a.push_back(m.mae_age);
    l.push_back(m.mae_leaf);
  }
  return {mean_over_crops(a), mean_over_crops(l)};
}

}  // namespace detail

/// For each percentage and trial, removes views from every group at random
/// (seeded per (seed, p, trial)), predicts on the remainder and records the
/// cross-crop mean MAE per task, averaged over trials. A percentage that
/// removes nothing from any group is deterministic and evaluated once
/// (trials = 1), which makes the 0% point identical to evaluate().
inline SensitivityCurve sensitivity_sweep(const BatchPredictor& predict, const EmbeddingCache& cache,
                                          const std::vector<LevelGroup>& groups, std::vector<double> percentages,
                                          std::size_t trials, std::uint64_t seed) {
  if (groups.empty()) throw InvalidArgument("sensitivity_sweep: no groups");
  if (trials < 1) throw InvalidArgument("sensitivity_sweep: trials must be >= 1");
  std::sort(percentages.begin(), percentages.end());
  percentages.erase(std::unique(percentages.begin(), percentages.end()), percentages.end());
  SensitivityCurve curve;
  for (double p : percentages) {
    if (!(p >= 0.0 && p < 100.0)) throw InvalidArgument("removal percentages must lie in [0, 100)");
    const bool removes_any = std::any_of(groups.begin(), groups.end(), [&](const LevelGroup& g) {
      return views_to_remove(g.view_count(), p) > 0;
    });
    const std::size_t n_trials = removes_any ? trials : 1;
    double sum_age = 0.0;
    double sum_leaf = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t) {
      std::mt19937_64 rng(detail::sub_seed(seed, p, t));
      std::vector<LevelGroup> reduced;
      reduced.reserve(groups.size());
      for (const auto& g : groups) {
        const std::size_t keep = g.view_count() - views_to_remove(g.view_count(), p);
        reduced.push_back(removes_any ? detail::subsample_group(g, keep, rng) : g);
      }
      const std::vector<Prediction> preds = predict(reduced);
      if (preds.size() != reduced.size()) throw InvalidArgument("sensitivity_sweep: predictor returned wrong count");
      const auto [a, l] = detail::mean_crop_maes(cache, reduced, preds);
      sum_age += a;
      sum_leaf += l;
    }
    SensitivityPoint pt;
    pt.removal_percent = p;
    pt.trials = n_trials;
    pt.seed = seed;
    pt.mae_age = n_trials == 1 ? sum_age : sum_age / static_cast<double>(n_trials);
    pt.mae_leaf = n_trials == 1 ? sum_leaf : sum_leaf / static_cast<double>(n_trials);
    curve.points.push_back(pt);
  }
  return curve;
}

struct DegradationSummary {
  double age = 0.0;   // percent
  double leaf = 0.0;  // percent
  double mean = 0.0;  // average of the two tasks
};

/// Degradation from the first (least removal) to the last point of a curve.
inline DegradationSummary summarize_degradation(const SensitivityCurve& curve) {
  if (curve.points.size() < 2) throw InvalidArgument("degradation needs at least two curve points");
  const auto& first = curve.points.front();
  const auto& last = curve.points.back();
  DegradationSummary s;
  s.age = degradation(first.mae_age, last.mae_age);
  s.leaf = degradation(first.mae_leaf, last.mae_leaf);
  s.mean = (s.age + s.leaf) / 2.0;
  return s;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

enum class ReportFormat { json, csv, markdown };

inline io::json to_json(const EvalReport& r) {
  io::json j;
  j["model"] = r.model;
  j["config"] = r.config;
  j["crops"] = io::json::array();
  for (const auto& c : r.crops) {
    j["crops"].push_back({{"crop", c.crop},
                          {"samples", c.samples},
                          {"mae_age", c.mae_age},
                          {"rmse_age", c.rmse_age},
                          {"mae_leaf", c.mae_leaf},
                          {"rmse_leaf", c.rmse_leaf}});
  }
  j["mean"] = {{"mae_age", r.mean_mae_age},
               {"mae_leaf", r.mean_mae_leaf},
               {"rmse_age", r.mean_rmse_age},
               {"rmse_leaf", r.mean_rmse_leaf}};
  return j;
}

inline EvalReport eval_report_from_json(const io::json& j) {
  try {
    EvalReport r;
    r.model = j.at("model");
    r.config = j.at("config");
    for (const auto& c : j.at("crops")) {
      r.crops.push_back({c.at("crop").get<std::string>(), c.at("samples").get<std::size_t>(),
                         c.at("mae_age").get<double>(), c.at("rmse_age").get<double>(),
                         c.at("mae_leaf").get<double>(), c.at("rmse_leaf").get<double>()});
    }
    const auto& m = j.at("mean");
    r.mean_mae_age = m.at("mae_age").get<double>();
    r.mean_mae_leaf = m.at("mae_leaf").get<double>();
    r.mean_rmse_age = m.at("rmse_age").get<double>();
    r.mean_rmse_leaf = m.at("rmse_leaf").get<double>();
    return r;
  } catch (const io::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest, std::string("malformed report: ") + e.what());
  }
}

inline io::json to_json(const SensitivityCurve& c) {
  io::json j;
  j["model"] = c.model;
  j["config"] = c.config;
  j["points"] = io::json::array();
  for (const auto& p : c.points) {
    j["points"].push_back({{"removal_percent", p.removal_percent},
                           {"mae_age", p.mae_age},
                           {"mae_leaf", p.mae_leaf},
                           {"trials", p.trials},
                           {"seed", p.seed}});
  }
  if (c.points.size() >= 2 && c.points.front().mae_age > 0.0 && c.points.front().mae_leaf > 0.0) {
    const auto d = summarize_degradation(c);
    j["degradation_percent"] = {{"age", d.age}, {"leaf", d.leaf}, {"mean", d.mean}};
  }
  return j;
}

inline SensitivityCurve sensitivity_curve_from_json(const io::json& j) {
  try {
    SensitivityCurve c;
    c.model = j.at("model");
    c.config = j.at("config");
    for (const auto& p : j.at("points")) {
      c.points.push_back({p.at("removal_percent").get<double>(), p.at("mae_age").get<double>(),
                          p.at("mae_leaf").get<double>(), p.at("trials").get<std::size_t>(),
                          p.at("seed").get<std::uint64_t>()});
    }
    return c;
  } catch (const io::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest, std::string("malformed sensitivity curve: ") + e.what());
  }
}

inline std::string to_csv(const EvalReport& r) {
  std::string s = "crop,task,samples,mae,rmse\n";
  for (const auto& c : r.crops) {
    s += c.crop + ",age," + std::to_string(c.samples) + "," + io::format_sig6(c.mae_age) + "," +
         io::format_sig6(c.rmse_age) + "\n";
    s += c.crop + ",leaf_count," + std::to_string(c.samples) + "," + io::format_sig6(c.mae_leaf) + "," +
         io::format_sig6(c.rmse_leaf) + "\n";
  }
  std::size_t total = 0;
  for (const auto& c : r.crops) total += c.samples;
  s += "mean,age," + std::to_string(total) + "," + io::format_sig6(r.mean_mae_age) + "," +
       io::format_sig6(r.mean_rmse_age) + "\n";
  s += "mean,leaf_count," + std::to_string(total) + "," + io::format_sig6(r.mean_mae_leaf) + "," +
       io::format_sig6(r.mean_rmse_leaf) + "\n";
  return s;
}

inline std::string to_csv(const SensitivityCurve& c) {
  std::string s = "removal_percent,mae_age,mae_leaf,trials,seed\n";
  for (const auto& p : c.points) {
    s += io::format_sig6(p.removal_percent) + "," + io::format_sig6(p.mae_age) + "," + io::format_sig6(p.mae_leaf) +
         "," + std::to_string(p.trials) + "," + std::to_string(p.seed) + "\n";
  }
  return s;
}

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

/// MAE table with one row per labelled report: crops x {age, leaf} + Mean,
/// two decimals. Crop columns are the union over all reports.
inline std::string markdown_mae_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::set<std::string> crop_set;
  for (const auto& [label, r] : rows) {
    for (const auto& c : r.crops) crop_set.insert(c.crop);
  }
  const std::vector<std::string> crops(crop_set.begin(), crop_set.end());
  std::string s = "| Approach |";
  for (const char* task : {"Age", "Leaf Count"}) {
    for (const auto& c : crops) s += " MAE " + std::string(task) + " " + capitalize(c) + " |";
    s += " MAE " + std::string(task) + " Mean |";
  }
  s += "\n|---|";
  for (std::size_t i = 0; i < 2 * (crops.size() + 1); ++i) s += "---:|";
  s += "\n";
  for (const auto& [label, r] : rows) {
    s += "| " + label + " |";
    for (int task = 0; task < 2; ++task) {
      for (const auto& c : crops) {
        auto it = std::find_if(r.crops.begin(), r.crops.end(), [&](const CropMetrics& m) { return m.crop == c; });
        s += it == r.crops.end() ? std::string(" - |")
                                 : " " + io::format_fixed(task == 0 ? it->mae_age : it->mae_leaf, 2) + " |";
      }
      s += " " + io::format_fixed(task == 0 ? r.mean_mae_age : r.mean_mae_leaf, 2) + " |";
    }
    s += "\n";
  }
  return s;
}

inline std::string to_markdown(const EvalReport& r) {
  std::string label = r.model.contains("mode") ? capitalize(r.model["mode"].get<std::string>()) : "Model";
  std::string s = "# Evaluation report\n\n" + markdown_mae_table({{label, r}});
  s += "\n| Crop | Samples | MAE Age | RMSE Age | MAE Leaf Count | RMSE Leaf Count |\n|---|---:|---:|---:|---:|---:|\n";
  for (const auto& c : r.crops) {
    s += "| " + capitalize(c.crop) + " | " + std::to_string(c.samples) + " | " + io::format_fixed(c.mae_age, 2) +
         " | " + io::format_fixed(c.rmse_age, 2) + " | " + io::format_fixed(c.mae_leaf, 2) + " | " +
         io::format_fixed(c.rmse_leaf, 2) + " |\n";
  }
  return s;
}

inline std::string to_markdown(const SensitivityCurve& c) {
  std::string s = "# Sensitivity to missing views\n\n| Removed (%) | MAE Age | MAE Leaf Count | Trials |\n|---:|---:|---:|---:|\n";
  for (const auto& p : c.points) {
    s += "| " + io::format_fixed(p.removal_percent, 1) + " | " + io::format_fixed(p.mae_age, 2) + " | " +
         io::format_fixed(p.mae_leaf, 2) + " | " + std::to_string(p.trials) + " |\n";
  }
  if (c.points.size() >= 2 && c.points.front().mae_age > 0.0 && c.points.front().mae_leaf > 0.0) {
    const auto d = summarize_degradation(c);
    s += "\nDegradation: age " + io::format_fixed(d.age, 2) + "%, leaf count " + io::format_fixed(d.leaf, 2) +
         "%, mean " + io::format_fixed(d.mean, 2) + "%\n";
  }
  return s;
}

template <class Report>
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path) {
  switch (format) {
    case ReportFormat::json: io::write_json(path, to_json(report)); break;
    case ReportFormat::csv: io::atomic_write(path, to_csv(report)); break;
    case ReportFormat::markdown: io::atomic_write(path, to_markdown(report)); break;
  }
}

}  // namespace phenofuse
