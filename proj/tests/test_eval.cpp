#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "phenofuse/eval.hpp"
#include "phenofuse/synth.hpp"
#include "test_support.hpp"

using namespace phenofuse;
using testing_support::TempDir;

namespace {

/// Deterministic stand-in model: age from the first views' count, so any
/// view removal shows up in the predictions.
BatchPredictor view_count_predictor(std::vector<std::size_t>* seen_counts = nullptr) {
  return [seen_counts](std::span<const LevelGroup> groups) {
    std::vector<Prediction> out;
    for (const auto& g : groups) {
      if (seen_counts) seen_counts->push_back(g.view_count());
      double s = 0.0;
      for (std::size_t r : g.rows) s += static_cast<double>(r % 7);
      out.push_back({static_cast<double>(g.key.day) + s / static_cast<double>(g.view_count()),
                     static_cast<double>(g.view_count()) / 4.0});
    }
    return out;
  };
}

EmbeddingCache small_cache() { return generate_synthetic_cache({2, 3, 0.0, 1, {"mustard", "wheat"}}).cache; }

EvalReport sample_report() {
  EvalReport r;
  r.model = {{"mode", "multimodal"}};
  r.config = {{"seed", 7}};
  r.crops = {{"mustard", 10, 0.1, 0.2, 0.3, 0.4}, {"radish", 10, 1.0 / 3.0, 0.5, 0.6, 0.7}};
  r.mean_mae_age = (0.1 + 1.0 / 3.0) / 2.0;
  r.mean_mae_leaf = 0.45;
  r.mean_rmse_age = 0.35;
  r.mean_rmse_leaf = 0.55;
  return r;
}

}  // namespace

TEST(SplitByPlant, HeldOutPlantGoesToTest) {
  const auto cache = small_cache();
  const auto split = split_by_plant(cache.records, {{Crop("wheat"), 2}});
  EXPECT_EQ(split.train.size() + split.test.size(), cache.records.size());
  for (std::size_t i : split.test) {
    EXPECT_EQ(cache.records[i].crop.name(), "wheat");
    EXPECT_EQ(cache.records[i].plant_id, 2);
  }
  for (std::size_t i : split.train) {
    EXPECT_FALSE(cache.records[i].crop.name() == "wheat" && cache.records[i].plant_id == 2);
  }
  EXPECT_EQ(split.test.size(), 3u * 5 * 24);
}

TEST(SplitByPlant, UnknownPlantRejected) {
  const auto cache = small_cache();
  EXPECT_THROW(split_by_plant(cache.records, {{Crop("wheat"), 99}}), InvalidArgument);
  EXPECT_THROW(split_by_plant(cache.records, {{Crop("radish"), 1}}), InvalidArgument);
}

TEST(ParseHoldOut, Formats) {
  const auto h = parse_hold_out({"Mustard:3", "wheat:1"});
  EXPECT_EQ(h.at(Crop("mustard")), 3);
  EXPECT_EQ(h.at(Crop("wheat")), 1);
  EXPECT_THROW(parse_hold_out({"wheat"}), InvalidArgument);
  EXPECT_THROW(parse_hold_out({"wheat:x"}), InvalidArgument);
  EXPECT_THROW(parse_hold_out({":2"}), InvalidArgument);
}

TEST(Metrics, Examples) {
  const std::vector<double> p{0.0, 0.0}, t{1.0, 3.0};
  EXPECT_DOUBLE_EQ(mae(p, t), 2.0);
  EXPECT_DOUBLE_EQ(rmse(p, t), std::sqrt(5.0));
  EXPECT_EQ(mae(t, t), 0.0);
  EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(rmse(p, std::vector<double>{1.0}), InvalidArgument);
}

TEST(Metrics, MaeNeverExceedsRmse) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + trial % 17), t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = n(rng);
      t[i] = n(rng);
    }
    EXPECT_LE(mae(p, t), rmse(p, t) + 1e-12);
  }
}

TEST(Metrics, CrossCropMeans) {
  const std::vector<double> age{1.97, 1.53, 8.23};
  EXPECT_EQ(io::format_fixed(mean_over_crops(age), 2), "3.91");
  const std::vector<double> leaf{3.16, 4.66, 1.43};
  EXPECT_EQ(io::format_fixed(mean_over_crops(leaf), 2), "3.08");
  const std::vector<double> one{2.5};
  EXPECT_EQ(mean_over_crops(one), 2.5);
  EXPECT_THROW(mean_over_crops(std::vector<double>{}), InvalidArgument);
}

TEST(Metrics, DegradationAndGain) {
  EXPECT_DOUBLE_EQ(degradation(1.0, 1.5), 50.0);
  EXPECT_DOUBLE_EQ(degradation(2.0, 2.0), 0.0);
  EXPECT_NEAR(degradation(3.89, 4.39), 12.853470437, 1e-8);
  EXPECT_EQ(io::format_fixed(degradation(3.89, 4.39), 1), "12.9");
  EXPECT_DOUBLE_EQ(robustness_gain(50.0, 20.0), 60.0);
  EXPECT_THROW(degradation(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(robustness_gain(0.0, 1.0), InvalidArgument);
}

TEST(Evaluate, PerCropMetricsAgainstHandComputation) {
  const auto cache = small_cache();
  const auto groups = group_by_level(cache);
  // predicts day + 1 for mustard and day - 2 for wheat; leaf exact
  const BatchPredictor predict = per_group([&](const LevelGroup& g) {
    const double shift = g.key.crop.name() == "mustard" ? 1.0 : -2.0;
    return Prediction{g.key.day + shift, static_cast<double>(synthetic_leaf_count(g.key.day))};
  });
  const auto r = evaluate(predict, cache, groups);
  ASSERT_EQ(r.crops.size(), 2u);
  EXPECT_EQ(r.crops[0].crop, "mustard");
  EXPECT_EQ(r.crops[0].samples, 2u * 3 * 5);
  EXPECT_DOUBLE_EQ(r.crops[0].mae_age, 1.0);
  EXPECT_DOUBLE_EQ(r.crops[1].mae_age, 2.0);
  EXPECT_DOUBLE_EQ(r.crops[1].rmse_age, 2.0);
  EXPECT_EQ(r.crops[0].mae_leaf, 0.0);
  EXPECT_DOUBLE_EQ(r.mean_mae_age, 1.5);
  EXPECT_THROW(evaluate(predict, cache, {}), InvalidArgument);
}

TEST(ViewsToRemove, Rounding) {
  EXPECT_EQ(views_to_remove(24, 0.0), 0u);
  EXPECT_EQ(views_to_remove(24, 12.5), 3u);
  EXPECT_EQ(views_to_remove(24, 95.8), 23u);
  EXPECT_EQ(views_to_remove(24, 99.9), 23u);
  EXPECT_EQ(views_to_remove(1, 50.0), 0u);
  EXPECT_EQ(views_to_remove(0, 50.0), 0u);
}

TEST(Sensitivity, ZeroPercentEqualsEvaluate) {
  const auto cache = small_cache();
  const auto groups = group_by_level(cache);
  const auto predict = view_count_predictor();
  const auto report = evaluate(predict, cache, groups);
  const auto curve = sensitivity_sweep(predict, cache, groups, {0.0, 50.0}, 3, 7);
  ASSERT_EQ(curve.points.size(), 2u);
  EXPECT_EQ(curve.points[0].mae_age, report.mean_mae_age);
  EXPECT_EQ(curve.points[0].mae_leaf, report.mean_mae_leaf);
  EXPECT_EQ(curve.points[0].trials, 1u);
  EXPECT_EQ(curve.points[1].trials, 3u);
}

TEST(Sensitivity, MaximumRemovalKeepsOneView) {
  const auto cache = small_cache();
  const auto groups = group_by_level(cache);
  std::vector<std::size_t> seen;
  (void)sensitivity_sweep(view_count_predictor(&seen), cache, groups, {95.8}, 2, 7);
  ASSERT_EQ(seen.size(), 2 * groups.size());
  for (std::size_t n : seen) EXPECT_EQ(n, 1u);
}

TEST(Sensitivity, RetainedViewsAreSubsetsInAngleOrder) {
  const auto cache = small_cache();
  const auto groups = group_by_level(cache);
  std::vector<LevelGroup> reduced;
  const BatchPredictor capture = [&](std::span<const LevelGroup> gs) {
    reduced.assign(gs.begin(), gs.end());
    return view_count_predictor()(gs);
  };
  (void)sensitivity_sweep(capture, cache, groups, {37.5}, 1, 3);
  ASSERT_EQ(reduced.size(), groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    EXPECT_EQ(reduced[g].view_count(), 24u - 9u);
    EXPECT_EQ(reduced[g].key, groups[g].key);
    for (std::size_t i = 1; i < reduced[g].rows.size(); ++i) {
      EXPECT_LT(cache.records[reduced[g].records[i - 1]].angle, cache.records[reduced[g].records[i]].angle);
    }
    for (std::size_t r : reduced[g].rows) {
      EXPECT_NE(std::find(groups[g].rows.begin(), groups[g].rows.end(), r), groups[g].rows.end());
    }
  }
}

TEST(Sensitivity, DeterministicForSeed) {
  const auto cache = small_cache();
  const auto groups = group_by_level(cache);
  const std::vector<double> ps{0.0, 25.0, 62.5, 95.8};
  const auto a = sensitivity_sweep(view_count_predictor(), cache, groups, ps, 4, 11);
  const auto b = sensitivity_sweep(view_count_predictor(), cache, groups, ps, 4, 11);
  EXPECT_EQ(a, b);
  const auto c = sensitivity_sweep(view_count_predictor(), cache, groups, ps, 4, 12);
  EXPECT_NE(a.points[1].mae_age, c.points[1].mae_age);
}

TEST(Sensitivity, Errors) {
  const auto cache = small_cache();
  const auto groups = group_by_level(cache);
  EXPECT_THROW(sensitivity_sweep(view_count_predictor(), cache, {}, {0.0}, 1, 1), InvalidArgument);
  EXPECT_THROW(sensitivity_sweep(view_count_predictor(), cache, groups, {100.0}, 1, 1), InvalidArgument);
  EXPECT_THROW(sensitivity_sweep(view_count_predictor(), cache, groups, {-1.0}, 1, 1), InvalidArgument);
  EXPECT_THROW(sensitivity_sweep(view_count_predictor(), cache, groups, {0.0}, 0, 1), InvalidArgument);
}

TEST(Reports, EmptyCurveIsHeaderOnlyCsv) {
  EXPECT_EQ(to_csv(SensitivityCurve{}), "removal_percent,mae_age,mae_leaf,trials,seed\n");
}

TEST(Reports, JsonRoundTripIsExact) {
  const auto r = sample_report();
  EXPECT_EQ(eval_report_from_json(io::json::parse(to_json(r).dump())), r);

  SensitivityCurve c;
  c.points = {{0.0, 0.1 + 0.2, 1.0 / 7.0, 1, 5}, {50.0, 0.5, 0.25, 3, 5}};
  const auto j = io::json::parse(to_json(c).dump());
  EXPECT_EQ(sensitivity_curve_from_json(j), c);
  EXPECT_TRUE(j.contains("degradation_percent"));
}

TEST(Reports, CsvUsesSixSignificantDigits) {
  const auto csv = to_csv(sample_report());
  EXPECT_NE(csv.find("radish,age,10,0.333333,0.5\n"), std::string::npos);
  EXPECT_NE(csv.find("mean,leaf_count,20,0.45,0.55\n"), std::string::npos);
}

TEST(Reports, MarkdownTableHasMeanColumn) {
  const auto md = to_markdown(sample_report());
  EXPECT_NE(md.find("Mean"), std::string::npos);
  EXPECT_NE(md.find("| Multimodal | 0.10 | 0.33 | 0.22 |"), std::string::npos);
}

TEST(Reports, EmitWritesAllFormats) {
  TempDir dir;
  const auto r = sample_report();
  emit_report(r, ReportFormat::json, dir / "r.json");
  emit_report(r, ReportFormat::csv, dir / "r.csv");
  emit_report(r, ReportFormat::markdown, dir / "r.md");
  EXPECT_EQ(eval_report_from_json(io::read_json(dir / "r.json")), r);
  EXPECT_EQ(testing_support::slurp(dir / "r.csv"), to_csv(r));
  EXPECT_EQ(testing_support::slurp(dir / "r.md"), to_markdown(r));
}

TEST(Reports, UnwritablePathFails) {
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(emit_report(sample_report(), ReportFormat::csv, dir / "file" / "sub" / "r.csv"), Error);
}
