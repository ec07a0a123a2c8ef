#pragma once

// Level-prompt text priors and the auxiliary level regressor.
//
// A prior table holds one 512-d text embedding per camera level for the
// prompt "a plant at approximately level X". On disk (`p`):
//   p.priors.manifest.json  prompts, levels, normalized flag
//   p.priors.f32bin         5 x 512 little-endian float32, level order

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "phenofuse/aggregation.hpp"
#include "phenofuse/embedding_store.hpp"
#include "phenofuse/error.hpp"
#include "phenofuse/io.hpp"
#include "phenofuse/nn.hpp"
#include "phenofuse/training.hpp"

namespace phenofuse {

inline std::string prompt_for_level(int level) {
  if (level < 1 || level > kNumLevels) {
    throw InvalidArgument("level " + std::to_string(level) + " outside 1..5");
  }
  return "a plant at approximately level " + std::to_string(level);
}

struct PriorEntry {
  int level = 1;
  std::string prompt;
  std::vector<float> embedding;

  friend bool operator==(const PriorEntry&, const PriorEntry&) = default;
};

struct PriorTable {
  std::vector<PriorEntry> entries;  // index i holds level i + 1
  bool normalized = false;

  friend bool operator==(const PriorTable&, const PriorTable&) = default;
};

inline std::filesystem::path priors_manifest_path(const std::filesystem::path& base) {
  return io::with_suffix(base, ".priors.manifest.json");
}
inline std::filesystem::path priors_payload_path(const std::filesystem::path& base) {
  return io::with_suffix(base, ".priors.f32bin");
}

/// Checks count, dimension, level order and prompt text.
inline void check_prior_table(const PriorTable& table) {
  if (table.entries.size() != static_cast<std::size_t>(kNumLevels)) {
    throw FormatError(FormatError::Kind::count_mismatch,
                      "prior table has " + std::to_string(table.entries.size()) + " entries, expected 5");
  }
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const auto& e = table.entries[i];
    if (e.level != static_cast<int>(i) + 1) {
      throw FormatError(FormatError::Kind::bad_manifest, "prior entries must be ordered by level 1..5");
    }
    if (e.embedding.size() != kEmbeddingDim) {
      throw FormatError(FormatError::Kind::dimension_mismatch,
                        "prior for level " + std::to_string(e.level) + " has dimension " +
                            std::to_string(e.embedding.size()));
    }
    if (e.prompt != prompt_for_level(e.level)) {
      throw FormatError(FormatError::Kind::bad_manifest,
                        "prompt for level " + std::to_string(e.level) + " does not match the template: \"" +
                            e.prompt + "\"");
    }
  }
}

inline void save_priors(const PriorTable& table, const std::filesystem::path& base) {
  check_prior_table(table);
  io::json manifest;
  manifest["format"] = "phenofuse-priors";
  manifest["version"] = 1;
  manifest["dimension"] = kEmbeddingDim;
  manifest["count"] = table.entries.size();
  manifest["normalized"] = table.normalized;
  manifest["entries"] = io::json::array();
  std::vector<float> matrix;
  for (const auto& e : table.entries) {
    manifest["entries"].push_back({{"level", e.level}, {"prompt", e.prompt}});
    matrix.insert(matrix.end(), e.embedding.begin(), e.embedding.end());
  }
  write_f32_matrix(priors_payload_path(base), matrix);
  io::write_json(priors_manifest_path(base), manifest);
}

inline PriorTable load_priors(const std::filesystem::path& base) {
  const io::json manifest = io::read_json(priors_manifest_path(base));
  PriorTable table;
  std::size_t dim = 0;
  try {
    dim = manifest.at("dimension").get<std::size_t>();
    const auto count = manifest.at("count").get<std::size_t>();
    const auto& entries = manifest.at("entries");
    if (count != static_cast<std::size_t>(kNumLevels) || entries.size() != count) {
      throw FormatError(FormatError::Kind::count_mismatch,
                        "prior file lists " + std::to_string(entries.size()) + " entries (count " +
                            std::to_string(count) + "), expected 5");
    }
    if (dim != kEmbeddingDim) {
      throw FormatError(FormatError::Kind::dimension_mismatch,
                        "prior dimension " + std::to_string(dim) + " != 512");
    }
    table.normalized = manifest.at("normalized").get<bool>();
    for (const auto& e : entries) {
      table.entries.push_back({e.at("level").get<int>(), e.at("prompt").get<std::string>(), {}});
    }
  } catch (const io::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_manifest, std::string("malformed prior manifest: ") + e.what());
  }
  const auto matrix = read_f32_matrix(priors_payload_path(base), table.entries.size(), dim);
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    table.entries[i].embedding.assign(matrix.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                      matrix.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
  check_prior_table(table);
  return table;
}

inline double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

/// Divides every embedding by its L2 norm; a zero vector is an error.
inline PriorTable normalize_priors(PriorTable table) {
  check_prior_table(table);
  for (auto& e : table.entries) {
    const double norm = l2_norm(e.embedding);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw InvalidArgument("prior for level " + std::to_string(e.level) + " has zero or non-finite norm");
    }
    for (float& x : e.embedding) x = static_cast<float>(static_cast<double>(x) / norm);
  }
  table.normalized = true;
  return table;
}

/// Stored prior for `level`; the table must be normalized.
inline std::span<const float> lookup_prior(const PriorTable& table, int level) {
  if (!table.normalized) throw InvalidArgument("lookup_prior: prior table is not normalized");
  if (level < 1 || level > static_cast<int>(table.entries.size())) {
    throw InvalidArgument("lookup_prior: level " + std::to_string(level) + " outside 1..5");
  }
  return table.entries[static_cast<std::size_t>(level - 1)].embedding;
}

// ---------------------------------------------------------------------------
// Level regressor
// ---------------------------------------------------------------------------

struct LevelEstimate {
  double continuous = 0.0;
  int quantized = 1;
};

/// clamp(round-half-up(x), 1, 5).
inline int quantize_level(double continuous) {
  if (std::isnan(continuous)) throw NumericError("level estimate is NaN");
  const double rounded = std::floor(continuous + 0.5);
  return static_cast<int>(std::clamp(rounded, 1.0, static_cast<double>(kNumLevels)));
}

inline nn::MlpSpec level_regressor_spec() { return {{kEmbeddingDim, 1024, 512, 64, 1}}; }

inline TrainConfig level_regressor_defaults() {
  TrainConfig c;
  c.epochs = 60;
  return c;
}

/// Trains on one mean embedding per level group, regressing the true level.
inline TrainResult train_level_regressor(const EmbeddingCache& cache, const std::vector<LevelGroup>& groups,
                                         const TrainConfig& config = level_regressor_defaults()) {
  if (groups.empty()) throw InvalidArgument("train_level_regressor: no level groups to train on");
  nn::Matrix<float> x(static_cast<Eigen::Index>(groups.size()), static_cast<Eigen::Index>(kEmbeddingDim));
  nn::Matrix<float> y(static_cast<Eigen::Index>(groups.size()), 1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto mean = aggregate_group(cache, groups[g]);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) x(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(d)) = mean[d];
    y(static_cast<Eigen::Index>(g), 0) = static_cast<float>(groups[g].key.level);
  }
  return train_regressor(level_regressor_spec(), x, y, config);
}

inline TrainResult train_level_regressor(const EmbeddingCache& cache,
                                         const TrainConfig& config = level_regressor_defaults()) {
  if (cache.records.empty()) throw InvalidArgument("train_level_regressor: cache is empty");
  return train_level_regressor(cache, group_by_level(cache), config);
}

inline LevelEstimate predict_level(const nn::MlpModel& regressor, std::span<const float> mean_embedding) {
  if (regressor.spec.input_size() != kEmbeddingDim || regressor.spec.output_size() != 1) {
    throw InvalidArgument("level regressor must map 512 inputs to 1 output, got " + regressor.spec.to_string());
  }
  if (mean_embedding.size() != kEmbeddingDim) {
    throw InvalidArgument("predict_level: embedding has dimension " + std::to_string(mean_embedding.size()));
  }
  auto [out, tape] = nn::forward<float>(regressor, mean_embedding);
  LevelEstimate est;
  est.continuous = static_cast<double>(out(0));
  est.quantized = quantize_level(est.continuous);
  return est;
}

}  // namespace phenofuse
