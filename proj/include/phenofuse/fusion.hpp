#pragma once

// Visual/text fusion and the two multi-task regressors.
//
// Unimodal: one image embedding (512) -> MLP 512-1024-512-64-2 -> (age, leaf).
// Multimodal: mean of a level group's views (512) concatenated with the
// unit-norm prior of its level (512) -> MLP 1024-2048-1024-512-64-2.
// The level comes from metadata, or from the level regressor when metadata
// are unavailable.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phenofuse/aggregation.hpp"
#include "phenofuse/embedding_store.hpp"
#include "phenofuse/error.hpp"
#include "phenofuse/level_prior.hpp"
#include "phenofuse/nn.hpp"
#include "phenofuse/training.hpp"

namespace phenofuse {

inline constexpr std::size_t kFusedDim = 2 * kEmbeddingDim;

inline nn::MlpSpec unimodal_spec() { return {{kEmbeddingDim, 1024, 512, 64, 2}}; }
inline nn::MlpSpec multimodal_spec() { return {{kFusedDim, 2048, 1024, 512, 64, 2}}; }

enum class ModelMode { unimodal, multimodal };

inline std::string_view to_string(ModelMode m) {
  return m == ModelMode::unimodal ? "unimodal" : "multimodal";
}

inline ModelMode parse_model_mode(std::string_view s) {
  if (s == "unimodal") return ModelMode::unimodal;
  if (s == "multimodal") return ModelMode::multimodal;
  throw InvalidArgument("unknown model mode '" + std::string(s) + "'");
}

struct Prediction {
  double age = 0.0;
  double leaf_count = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct Targets {
  double age = 0.0;
  double leaf_count = 0.0;
};

struct AggregatedSample {
  GroupKey key;
  std::vector<float> visual;
  std::size_t view_count = 0;
  Targets targets;
};

enum class LevelSource { metadata, regressor };

inline std::string_view to_string(LevelSource s) { return s == LevelSource::metadata ? "metadata" : "regressor"; }

struct FusedSample {
  std::vector<float> fused;
  int level_used = 1;
  LevelSource level_source = LevelSource::metadata;
};

/// Age is the group's day; leaf target is the mean annotated leaf count of
/// the group's views (identical across views in well-formed data).
inline Targets group_targets(const EmbeddingCache& cache, const LevelGroup& group) {
  if (group.records.empty()) throw InvalidArgument("group_targets: empty group");
  double leaf = 0.0;
  for (std::size_t r : group.records) leaf += cache.records.at(r).leaf_count;
  return {static_cast<double>(group.key.day), leaf / static_cast<double>(group.records.size())};
}

inline AggregatedSample make_aggregated_sample(const EmbeddingCache& cache, const LevelGroup& group) {
  return {group.key, aggregate_group(cache, group), group.view_count(), group_targets(cache, group)};
}

/// [visual || prior]; the prior must be unit-norm.
inline std::vector<float> fuse(std::span<const float> visual, std::span<const float> text_prior) {
  if (visual.size() != kEmbeddingDim || text_prior.size() != kEmbeddingDim) {
    throw InvalidArgument("fuse: expected two 512-d vectors, got " + std::to_string(visual.size()) + " and " +
                          std::to_string(text_prior.size()));
  }
  if (std::abs(l2_norm(text_prior) - 1.0) > 1e-5) {
    throw InvalidArgument("fuse: text prior is not unit-norm");
  }
  std::vector<float> out;
  out.reserve(kFusedDim);
  out.insert(out.end(), visual.begin(), visual.end());
  out.insert(out.end(), text_prior.begin(), text_prior.end());
  return out;
}

struct CompositeLoss {
  double total = 0.0;
  double age_mse = 0.0;
  double leaf_mse = 0.0;
};

/// MSE(age) + MSE(leaf), both components returned for logging.
inline CompositeLoss composite_loss(std::span<const Prediction> preds, std::span<const Targets> targets) {
  if (preds.empty()) throw InvalidArgument("composite_loss: empty input");
  if (preds.size() != targets.size()) throw InvalidArgument("composite_loss: length mismatch");
  CompositeLoss out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double da = preds[i].age - targets[i].age;
    const double dl = preds[i].leaf_count - targets[i].leaf_count;
    out.age_mse += da * da;
    out.leaf_mse += dl * dl;
  }
  const auto n = static_cast<double>(preds.size());
  out.age_mse /= n;
  out.leaf_mse /= n;
  out.total = out.age_mse + out.leaf_mse;
  return out;
}

namespace detail {

inline void require_io(const nn::MlpModel& model, std::size_t in, std::size_t out, std::string_view what) {
  if (model.spec.layer_sizes.size() < 2 || model.spec.input_size() != in || model.spec.output_size() != out) {
    throw InvalidArgument(std::string(what) + ": model spec " + model.spec.to_string() + " does not map " +
                          std::to_string(in) + " inputs to " + std::to_string(out) + " outputs");
  }
}

inline Prediction to_prediction(const nn::Matrix<float>& out, Eigen::Index row) {
  return {static_cast<double>(out(row, 0)), static_cast<double>(out(row, 1))};
}

inline nn::Matrix<float> row_matrix(std::span<const float> v) {
  nn::Matrix<float> m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

}  // namespace detail

inline Prediction predict_unimodal(const nn::MlpModel& model, std::span<const float> embedding) {
  detail::require_io(model, kEmbeddingDim, 2, "predict_unimodal");
  if (embedding.size() != kEmbeddingDim) throw InvalidArgument("predict_unimodal: embedding must be 512-d");
  return detail::to_prediction(nn::predict_batch(model, detail::row_matrix(embedding)), 0);
}

/// Group-level unimodal prediction: per-image predictions averaged over the
/// group's views in group order.
inline Prediction predict_unimodal_group(const nn::MlpModel& model, const EmbeddingCache& cache,
                                         const LevelGroup& group) {
  detail::require_io(model, kEmbeddingDim, 2, "predict_unimodal");
  if (group.rows.empty()) throw InvalidArgument("predict_unimodal: empty group");
  nn::Matrix<float> x(static_cast<Eigen::Index>(group.rows.size()), static_cast<Eigen::Index>(kEmbeddingDim));
  for (std::size_t i = 0; i < group.rows.size(); ++i) {
    const auto row = cache.row(group.rows[i]);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = row[d];
  }
  const auto out = nn::predict_batch(model, x);
  double age = 0.0;
  double leaf = 0.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    age += out(i, 0);
    leaf += out(i, 1);
  }
  const auto n = static_cast<double>(out.rows());
  return {age / n, leaf / n};
}

/// Where the multimodal path gets its level from.
struct LevelResolver {
  LevelSource source = LevelSource::metadata;
  const nn::MlpModel* regressor = nullptr;  // required for LevelSource::regressor

  static LevelResolver metadata() { return {}; }
  static LevelResolver from_regressor(const nn::MlpModel& model) { return {LevelSource::regressor, &model}; }
};

/// Builds the fused input for a group: aggregate -> resolve level -> prior
/// lookup -> concatenate.
inline FusedSample fuse_group(const EmbeddingCache& cache, const LevelGroup& group, const PriorTable& priors,
                              const LevelResolver& resolver) {
  if (group.rows.empty()) throw InvalidArgument("fuse_group: empty group");
  const auto visual = aggregate_group(cache, group);
  FusedSample sample;
  sample.level_source = resolver.source;
  if (resolver.source == LevelSource::regressor) {
    if (resolver.regressor == nullptr) throw InvalidArgument("level source 'regressor' needs a level model");
    sample.level_used = predict_level(*resolver.regressor, visual).quantized;
  } else {
    sample.level_used = group.key.level;
  }
  sample.fused = fuse(visual, lookup_prior(priors, sample.level_used));
  return sample;
}

inline std::pair<Prediction, FusedSample> predict_multimodal(const nn::MlpModel& model, const LevelGroup& group,
                                                             const EmbeddingCache& cache, const PriorTable& priors,
                                                             const LevelResolver& resolver) {
  detail::require_io(model, kFusedDim, 2, "predict_multimodal");
  FusedSample sample = fuse_group(cache, group, priors, resolver);
  const auto out = nn::predict_batch(model, detail::row_matrix(sample.fused));
  return {detail::to_prediction(out, 0), std::move(sample)};
}

/// Batched group-level unimodal prediction; same averaging as
/// predict_unimodal_group.
inline std::vector<Prediction> predict_unimodal_groups(const nn::MlpModel& model, const EmbeddingCache& cache,
                                                       std::span<const LevelGroup> groups) {
  detail::require_io(model, kEmbeddingDim, 2, "predict_unimodal");
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.rows.empty()) throw InvalidArgument("predict_unimodal: empty group");
    total += g.rows.size();
  }
  nn::Matrix<float> x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(kEmbeddingDim));
  Eigen::Index r = 0;
  for (const auto& g : groups) {
    for (std::size_t row : g.rows) {
      const auto emb = cache.row(row);
      for (std::size_t d = 0; d < kEmbeddingDim; ++d) x(r, static_cast<Eigen::Index>(d)) = emb[d];
      ++r;
    }
  }
  const auto out = nn::predict_batch(model, x);
  std::vector<Prediction> preds;
  preds.reserve(groups.size());
  r = 0;
  for (const auto& g : groups) {
    double age = 0.0;
    double leaf = 0.0;
    for (std::size_t i = 0; i < g.rows.size(); ++i, ++r) {
      age += out(r, 0);
      leaf += out(r, 1);
    }
    const auto n = static_cast<double>(g.rows.size());
    preds.push_back({age / n, leaf / n});
  }
  return preds;
}

/// Batched predict_multimodal: one forward pass over all fused vectors.
inline std::vector<Prediction> predict_multimodal_groups(const nn::MlpModel& model, std::span<const LevelGroup> groups,
                                                         const EmbeddingCache& cache, const PriorTable& priors,
                                                         const LevelResolver& resolver) {
  detail::require_io(model, kFusedDim, 2, "predict_multimodal");
  nn::Matrix<float> x(static_cast<Eigen::Index>(groups.size()), static_cast<Eigen::Index>(kFusedDim));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto sample = fuse_group(cache, groups[g], priors, resolver);
    for (std::size_t d = 0; d < kFusedDim; ++d) x(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(d)) = sample.fused[d];
  }
  const auto out = nn::predict_batch(model, x);
  std::vector<Prediction> preds;
  preds.reserve(groups.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i) preds.push_back(detail::to_prediction(out, i));
  return preds;
}

// ---------------------------------------------------------------------------
// Training sets and training
// ---------------------------------------------------------------------------

struct TrainingSet {
  nn::Matrix<float> inputs;
  nn::Matrix<float> targets;  // columns: age, leaf_count
};

/// One row per image.
inline TrainingSet unimodal_training_set(const EmbeddingCache& cache, std::span<const std::size_t> record_indices) {
  TrainingSet set;
  set.inputs.resize(static_cast<Eigen::Index>(record_indices.size()), static_cast<Eigen::Index>(kEmbeddingDim));
  set.targets.resize(static_cast<Eigen::Index>(record_indices.size()), 2);
  for (std::size_t i = 0; i < record_indices.size(); ++i) {
    const auto& rec = cache.records.at(record_indices[i]);
    const auto row = cache.row(rec.embedding_row);
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) set.inputs(r, static_cast<Eigen::Index>(d)) = row[d];
    set.targets(r, 0) = static_cast<float>(rec.day);
    set.targets(r, 1) = static_cast<float>(rec.leaf_count);
  }
  return set;
}

/// One row per level group, fused with the prior of its metadata level.
inline TrainingSet multimodal_training_set(const EmbeddingCache& cache, const std::vector<LevelGroup>& groups,
                                           const PriorTable& priors) {
  TrainingSet set;
  set.inputs.resize(static_cast<Eigen::Index>(groups.size()), static_cast<Eigen::Index>(kFusedDim));
  set.targets.resize(static_cast<Eigen::Index>(groups.size()), 2);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto sample = fuse_group(cache, groups[g], priors, LevelResolver::metadata());
    const auto t = group_targets(cache, groups[g]);
    const auto r = static_cast<Eigen::Index>(g);
    for (std::size_t d = 0; d < kFusedDim; ++d) set.inputs(r, static_cast<Eigen::Index>(d)) = sample.fused[d];
    set.targets(r, 0) = static_cast<float>(t.age);
    set.targets(r, 1) = static_cast<float>(t.leaf_count);
  }
  return set;
}

inline TrainResult train_model(ModelMode mode, const TrainingSet& set, const TrainConfig& config) {
  if (set.inputs.rows() == 0) throw InvalidArgument("train_model: training set is empty");
  return train_regressor(mode == ModelMode::unimodal ? unimodal_spec() : multimodal_spec(), set.inputs,
                         set.targets, config);
}

}  // namespace phenofuse
