#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "phenofuse/fusion.hpp"
#include "phenofuse/synth.hpp"
#include "test_support.hpp"

using namespace phenofuse;

namespace {

std::vector<float> unit(std::size_t i, float value = 1.0f) {
  std::vector<float> v(kEmbeddingDim, 0.0f);
  v[i] = value;
  return v;
}

nn::MlpModel constant_model(const nn::MlpSpec& spec, float age, float leaf) {
  auto m = nn::init_params(spec, 0);
  for (auto& l : m.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  m.layers.back().bias << age, leaf;
  return m;
}

}  // namespace

TEST(Aggregate, Examples) {
  std::mt19937_64 rng(1);
  const auto v = testing_support::random_vector(rng, kEmbeddingDim);
  EXPECT_EQ(aggregate_views({v}), v);

  auto neg = v;
  for (float& x : neg) x = -x;
  const auto zero = aggregate_views({v, neg});
  for (float x : zero) EXPECT_EQ(x, 0.0f);

  const auto mean = aggregate_views({unit(0, 1.0f), unit(0, 3.0f)});
  EXPECT_EQ(mean[0], 2.0f);
  EXPECT_EQ(mean[1], 0.0f);
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate_views(std::vector<std::vector<float>>{}), InvalidArgument);
  EXPECT_THROW(aggregate_views({std::vector<float>(3, 0.0f), std::vector<float>(4, 0.0f)}), InvalidArgument);
}

TEST(Aggregate, PermutationInvarianceProperty) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(1, 24);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<float>> views;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) views.push_back(testing_support::random_vector(rng, kEmbeddingDim, 10.0f));
    auto shuffled = views;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    const auto a = aggregate_views(views);
    const auto b = aggregate_views(shuffled);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) EXPECT_LE(std::abs(a[d] - b[d]), 1e-5);

    const auto ca = aggregate_views(views, SummationOrder::canonical);
    const auto cb = aggregate_views(shuffled, SummationOrder::canonical);
    EXPECT_EQ(std::memcmp(ca.data(), cb.data(), kEmbeddingDim * sizeof(float)), 0);

    // independent double-precision oracle
    for (std::size_t d = 0; d < kEmbeddingDim; d += 37) {
      double acc = 0.0;
      for (const auto& v : views) acc += v[d];
      EXPECT_NEAR(a[d], acc / n, 1e-5);
    }
  }
}

TEST(Fuse, LayoutAndIdentity) {
  std::mt19937_64 rng(3);
  const auto visual = testing_support::random_vector(rng, kEmbeddingDim);
  auto prior = testing_support::random_vector(rng, kEmbeddingDim);
  const double n = l2_norm(prior);
  for (float& x : prior) x = static_cast<float>(x / n);

  const auto f = fuse(visual, prior);
  ASSERT_EQ(f.size(), kFusedDim);
  EXPECT_TRUE(std::equal(visual.begin(), visual.end(), f.begin()));
  EXPECT_TRUE(std::equal(prior.begin(), prior.end(), f.begin() + kEmbeddingDim));

  const auto z = fuse(std::vector<float>(kEmbeddingDim, 0.0f), prior);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) EXPECT_EQ(z[i], 0.0f);
}

TEST(Fuse, Errors) {
  EXPECT_THROW(fuse(std::vector<float>(511, 0.0f), unit(0)), InvalidArgument);
  EXPECT_THROW(fuse(std::vector<float>(512, 0.0f), unit(0, 2.0f)), InvalidArgument);
}

TEST(CompositeLoss, Examples) {
  const std::vector<Prediction> perfect{{3.0, 4.0}};
  const std::vector<Targets> t{{3.0, 4.0}};
  EXPECT_EQ(composite_loss(perfect, t).total, 0.0);

  const std::vector<Prediction> off{{4.0, 6.0}};
  const auto l = composite_loss(off, t);
  EXPECT_DOUBLE_EQ(l.age_mse, 1.0);
  EXPECT_DOUBLE_EQ(l.leaf_mse, 4.0);
  EXPECT_DOUBLE_EQ(l.total, 5.0);

  const std::vector<Prediction> under{{2.0, 2.0}};
  EXPECT_DOUBLE_EQ(composite_loss(under, t).total, 5.0);
  EXPECT_THROW(composite_loss(std::vector<Prediction>{}, std::vector<Targets>{}), InvalidArgument);
  EXPECT_THROW(composite_loss(off, std::vector<Targets>{}), InvalidArgument);
}

TEST(PredictUnimodal, ZeroWeightsReturnFinalBias) {
  const auto m = constant_model(unimodal_spec(), 5.0f, 7.0f);
  std::mt19937_64 rng(4);
  const auto p = predict_unimodal(m, testing_support::random_vector(rng, kEmbeddingDim));
  EXPECT_EQ(p.age, 5.0);
  EXPECT_EQ(p.leaf_count, 7.0);
}

TEST(PredictUnimodal, HandComputedTinyNetwork) {
  // hidden = relu(x[0]); out = (2h + 1, 3h - 1)
  auto m = nn::init_params(nn::MlpSpec{{kEmbeddingDim, 1, 2}}, 0);
  m.layers[0].weight.setZero();
  m.layers[0].weight(0, 0) = 1.0f;
  m.layers[1].weight << 2.0f, 3.0f;
  m.layers[1].bias << 1.0f, -1.0f;
  const auto p = predict_unimodal(m, unit(0, 4.0f));
  EXPECT_EQ(p.age, 9.0);
  EXPECT_EQ(p.leaf_count, 11.0);
  const auto q = predict_unimodal(m, unit(0, -4.0f));
  EXPECT_EQ(q.age, 1.0);
  EXPECT_EQ(q.leaf_count, -1.0);
}

TEST(PredictUnimodal, RejectsWrongModelOrInput) {
  const auto mm = constant_model(nn::MlpSpec{{kFusedDim, 2}}, 0, 0);
  EXPECT_THROW(predict_unimodal(mm, unit(0)), InvalidArgument);
  const auto m = constant_model(nn::MlpSpec{{kEmbeddingDim, 2}}, 0, 0);
  EXPECT_THROW(predict_unimodal(m, std::vector<float>(10, 0.0f)), InvalidArgument);
}

TEST(PredictUnimodal, GroupBatchMatchesSingleGroups) {
  const auto synth = generate_synthetic_cache({2, 2, 0.5, 3, {"wheat"}});
  const auto groups = group_by_level(synth.cache);
  const auto m = nn::init_params(nn::MlpSpec{{kEmbeddingDim, 8, 2}}, 5);
  const auto batch = predict_unimodal_groups(m, synth.cache, groups);
  ASSERT_EQ(batch.size(), groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto single = predict_unimodal_group(m, synth.cache, groups[g]);
    EXPECT_NEAR(batch[g].age, single.age, 1e-5);
    EXPECT_NEAR(batch[g].leaf_count, single.leaf_count, 1e-5);
  }
}

TEST(PredictMultimodal, RegressorAndMetadataPathsAgree) {
  const auto priors = synthetic_priors(1);
  EmbeddingCache cache;
  std::mt19937_64 rng(5);
  testing_support::add_group(cache, "mustard", 1, 3, 4, 5, testing_support::random_vector(rng, kEmbeddingDim));
  const auto groups = group_by_level(cache);

  // regressor that always answers 4.1, which quantizes to the true level 4
  auto reg = nn::init_params(level_regressor_spec(), 1);
  for (auto& l : reg.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  reg.layers.back().bias(0) = 4.1f;

  const auto model = nn::init_params(multimodal_spec(), 9);
  const auto [pm, sm] = predict_multimodal(model, groups[0], cache, priors, LevelResolver::metadata());
  const auto [pr, sr] = predict_multimodal(model, groups[0], cache, priors, LevelResolver::from_regressor(reg));
  EXPECT_EQ(sm.level_used, 4);
  EXPECT_EQ(sr.level_used, 4);
  EXPECT_EQ(sr.level_source, LevelSource::regressor);
  EXPECT_EQ(pm, pr);
  EXPECT_EQ(sm.fused, sr.fused);

  const auto bm = predict_multimodal_groups(model, groups, cache, priors, LevelResolver::metadata());
  const auto br = predict_multimodal_groups(model, groups, cache, priors, LevelResolver::from_regressor(reg));
  EXPECT_EQ(bm, br);
}

TEST(PredictMultimodal, SingleViewGroupAndConstantModel) {
  const auto priors = synthetic_priors(2);
  EmbeddingCache cache;
  testing_support::add_group(cache, "wheat", 1, 1, 2, 1, unit(3), 1);
  const auto groups = group_by_level(cache);
  ASSERT_EQ(groups[0].view_count(), 1u);
  const auto m = constant_model(multimodal_spec(), 12.0f, 18.0f);
  const auto [p, s] = predict_multimodal(m, groups[0], cache, priors, LevelResolver::metadata());
  EXPECT_EQ(p.age, 12.0);
  EXPECT_EQ(p.leaf_count, 18.0);
  EXPECT_EQ(s.fused[3], 1.0f);
  EXPECT_TRUE(std::equal(s.fused.begin() + kEmbeddingDim, s.fused.end(), lookup_prior(priors, 2).begin()));
}

TEST(PredictMultimodal, Errors) {
  const auto priors = synthetic_priors(2);
  EmbeddingCache cache;
  testing_support::add_group(cache, "wheat", 1, 1, 2, 1, unit(3), 1);
  const auto groups = group_by_level(cache);
  const auto m = nn::init_params(multimodal_spec(), 1);
  EXPECT_THROW(predict_multimodal(m, groups[0], cache, priors, {LevelSource::regressor, nullptr}), InvalidArgument);
  auto raw = priors;
  raw.normalized = false;
  EXPECT_THROW(predict_multimodal(m, groups[0], cache, raw, LevelResolver::metadata()), InvalidArgument);
  const auto uni = nn::init_params(unimodal_spec(), 1);
  EXPECT_THROW(predict_multimodal(uni, groups[0], cache, priors, LevelResolver::metadata()), InvalidArgument);
}

TEST(TrainingSets, ShapesAndTargets) {
  const auto synth = generate_synthetic_cache({2, 3, 0.0, 4, {"radish"}});
  std::vector<std::size_t> all(synth.cache.records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto uni = unimodal_training_set(synth.cache, all);
  EXPECT_EQ(uni.inputs.rows(), static_cast<Eigen::Index>(all.size()));
  EXPECT_EQ(uni.inputs.cols(), static_cast<Eigen::Index>(kEmbeddingDim));

  const auto groups = group_by_level(synth.cache);
  const auto mm = multimodal_training_set(synth.cache, groups, synthetic_priors(4));
  ASSERT_EQ(mm.inputs.rows(), static_cast<Eigen::Index>(groups.size()));
  EXPECT_EQ(mm.inputs.cols(), static_cast<Eigen::Index>(kFusedDim));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    EXPECT_EQ(mm.targets(static_cast<Eigen::Index>(g), 0), groups[g].key.day);
    EXPECT_EQ(mm.targets(static_cast<Eigen::Index>(g), 1), synthetic_leaf_count(groups[g].key.day));
  }
}

TEST(TrainModel, ZeroLearningRateKeepsInitialParams) {
  const auto synth = generate_synthetic_cache({2, 2, 0.0, 5, {"wheat"}});
  const auto groups = group_by_level(synth.cache);
  const auto set = multimodal_training_set(synth.cache, groups, synthetic_priors(5));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.seed = 13;
  const auto r = train_model(ModelMode::multimodal, set, cfg);
  EXPECT_TRUE(nn::params_equal(r.model.layers, nn::init_params(multimodal_spec(), 13).layers));
  // same parameters, different batch order: equal up to summation rounding
  EXPECT_NEAR(r.history[0].loss, r.history[1].loss, 1e-9 * r.history[0].loss);
}

TEST(TrainModel, DeterministicHistoryAndDecreasingLoss) {
  const auto synth = generate_synthetic_cache({2, 4, 0.0, 6, {"wheat", "radish"}});
  const auto groups = group_by_level(synth.cache);
  const auto set = multimodal_training_set(synth.cache, groups, synthetic_priors(6));
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.seed = 1;
  const auto a = train_model(ModelMode::multimodal, set, cfg);
  const auto b = train_model(ModelMode::multimodal, set, cfg);
  ASSERT_EQ(a.history.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(a.history[e].loss, b.history[e].loss);
    EXPECT_EQ(a.history[e].per_head, b.history[e].per_head);
    ASSERT_EQ(a.history[e].per_head.size(), 2u);
    EXPECT_NEAR(a.history[e].per_head[0] + a.history[e].per_head[1], a.history[e].loss, 1e-9 * a.history[e].loss);
  }
  for (std::size_t e = 1; e < 3; ++e) EXPECT_LT(a.history[e].loss, a.history[e - 1].loss);
  EXPECT_TRUE(nn::params_equal(a.model.layers, b.model.layers));
}

TEST(TrainModel, EmptySetRejected) {
  TrainingSet empty;
  empty.inputs.resize(0, static_cast<Eigen::Index>(kEmbeddingDim));
  empty.targets.resize(0, 2);
  EXPECT_THROW(train_model(ModelMode::unimodal, empty, TrainConfig{}), InvalidArgument);
}
