#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "phenofuse/aggregation.hpp"
#include "phenofuse/synth.hpp"
#include "test_support.hpp"

using namespace phenofuse;

namespace {

double dot(std::span<const float> a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace

TEST(Synth, DirectionsAreOrthonormal) {
  const auto d = synthetic_directions(7);
  const std::vector<const std::vector<double>*> v{&d.age, &d.leaf, &d.level};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < kEmbeddingDim; ++k) s += (*v[i])[k] * (*v[j])[k];
      EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Synth, ProjectionRecoversTargets) {
  const auto r = generate_synthetic_cache({2, 5, 0.0, 7, {"mustard"}});
  for (std::size_t i = 0; i < r.cache.records.size(); i += 13) {
    const auto& rec = r.cache.records[i];
    const auto row = r.cache.row(rec.embedding_row);
    EXPECT_NEAR(dot(row, r.directions.age), rec.day, 1e-4);
    EXPECT_NEAR(dot(row, r.directions.leaf), rec.leaf_count, 1e-4);
    EXPECT_NEAR(dot(row, r.directions.level), rec.level, 1e-4);
  }
}

TEST(Synth, ShapeAndCounts) {
  const auto r = generate_synthetic_cache({3, 4, 0.0, 1, {"mustard", "radish", "wheat"}});
  EXPECT_EQ(r.cache.records.size(), 3u * 3 * 4 * 5 * 24);
  EXPECT_EQ(r.cache.rows(), r.cache.records.size());
  EXPECT_TRUE(validate_cache(r.cache).passed());
  const auto groups = group_by_level(r.cache);
  EXPECT_EQ(groups.size(), 3u * 3 * 4 * 5);
  for (const auto& g : groups) EXPECT_TRUE(g.complete);
}

TEST(Synth, LeafCountRule) {
  EXPECT_EQ(synthetic_leaf_count(1), 2);
  EXPECT_EQ(synthetic_leaf_count(2), 3);
  EXPECT_EQ(synthetic_leaf_count(3), 5);
  EXPECT_EQ(synthetic_leaf_count(20), 30);
}

TEST(Synth, NoiselessViewsAreIdentical) {
  const auto r = generate_synthetic_cache({2, 2, 0.0, 3, {"wheat"}});
  for (const auto& g : group_by_level(r.cache)) {
    const auto first = r.cache.row(g.rows.front());
    const auto mean = aggregate_group(r.cache, g);
    EXPECT_TRUE(std::equal(first.begin(), first.end(), mean.begin()));
  }
}

TEST(Synth, SeedDeterminism) {
  const SynthSpec spec{2, 3, 0.2, 9, {"radish"}};
  const auto a = generate_synthetic_cache(spec);
  const auto b = generate_synthetic_cache(spec);
  EXPECT_EQ(a.cache, b.cache);
  auto other = spec;
  other.seed = 10;
  EXPECT_NE(generate_synthetic_cache(other).cache.matrix, a.cache.matrix);
}

TEST(Synth, PriorsAreUnitNormWithRealPrompts) {
  const auto p = synthetic_priors(4);
  EXPECT_TRUE(p.normalized);
  ASSERT_EQ(p.entries.size(), 5u);
  for (const auto& e : p.entries) {
    EXPECT_EQ(e.prompt, prompt_for_level(e.level));
    EXPECT_NEAR(l2_norm(e.embedding), 1.0, 1e-6);
  }
  EXPECT_EQ(synthetic_priors(4), p);
}

TEST(Synth, RejectsBadSpec) {
  EXPECT_THROW(generate_synthetic_cache({1, 3, 0.0, 1, {"wheat"}}), InvalidArgument);
  EXPECT_THROW(generate_synthetic_cache({2, 1, 0.0, 1, {"wheat"}}), InvalidArgument);
  EXPECT_THROW(generate_synthetic_cache({2, 3, -1.0, 1, {"wheat"}}), InvalidArgument);
  EXPECT_THROW(generate_synthetic_cache({2, 3, 0.0, 1, {}}), InvalidArgument);
}
