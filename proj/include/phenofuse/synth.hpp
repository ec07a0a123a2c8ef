#pragma once

// Synthetic embedding caches with a known linear generative model:
//
//   embedding = age * u_age + leaf * u_leaf + level * u_level + noise
//
// with u_age, u_leaf, u_level orthonormal in R^512 and leaf = ceil(1.5 * day).
// The angle never enters the noiseless embedding, so every view of a level
// group is identical when noise_std == 0.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "phenofuse/embedding_store.hpp"
#include "phenofuse/error.hpp"
#include "phenofuse/io.hpp"
#include "phenofuse/level_prior.hpp"

namespace phenofuse {

struct SynthSpec {
  int n_plants = 3;  // per crop
  int n_days = 20;
  double noise_std = 0.0;
  std::uint64_t seed = 7;
  std::vector<std::string> crops = {"mustard", "radish", "wheat"};

  void validate() const {
    if (n_plants < 2) throw InvalidArgument("synthetic spec needs at least 2 plants per crop");
    if (n_days < 2) throw InvalidArgument("synthetic spec needs at least 2 days");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw InvalidArgument("noise_std must be >= 0");
    if (crops.empty()) throw InvalidArgument("synthetic spec needs at least one crop");
  }
};

struct SynthDirections {
  std::vector<double> age;
  std::vector<double> leaf;
  std::vector<double> level;
};

struct SynthResult {
  EmbeddingCache cache;
  SynthDirections directions;
};

inline int synthetic_leaf_count(int day) { return static_cast<int>(std::ceil(1.5 * day)); }

/// Three orthonormal directions from seeded Gaussian draws (Gram-Schmidt).
inline SynthDirections synthetic_directions(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> v(kEmbeddingDim);
    for (double& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return {basis[0], basis[1], basis[2]};
}

inline SynthResult generate_synthetic_cache(const SynthSpec& spec) {
  spec.validate();
  SynthResult out;
  out.directions = synthetic_directions(spec.seed);
  const auto& dirs = out.directions;
  std::mt19937_64 noise_rng(spec.seed ^ 0x5851f42d4c957f2dULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n = spec.crops.size() * static_cast<std::size_t>(spec.n_plants) *
                        static_cast<std::size_t>(spec.n_days) * kNumLevels * kViewsPerLevel;
  out.cache.records.reserve(n);
  out.cache.matrix.reserve(n * kEmbeddingDim);
  std::vector<double> base(kEmbeddingDim);
  for (const auto& crop_name : spec.crops) {
    const Crop crop(crop_name);
    for (int plant = 1; plant <= spec.n_plants; ++plant) {
      for (int day = 1; day <= spec.n_days; ++day) {
        const int leaf = synthetic_leaf_count(day);
        for (int level = 1; level <= kNumLevels; ++level) {
          for (std::size_t d = 0; d < kEmbeddingDim; ++d) {
            base[d] = day * dirs.age[d] + leaf * dirs.leaf[d] + level * dirs.level[d];
          }
          for (int angle = 0; angle < kViewsPerLevel; ++angle) {
            ViewRecord rec;
            rec.crop = crop;
            rec.plant_id = plant;
            rec.day = day;
            rec.level = level;
            rec.angle = angle;
            rec.leaf_count = leaf;
            rec.embedding_row = out.cache.records.size();
            rec.image_path = "synthetic/" + crop.name() + "/p" + std::to_string(plant) + "/d" +
                             std::to_string(day) + "/L" + std::to_string(level) + "/a" + std::to_string(angle);
            out.cache.records.push_back(std::move(rec));
            for (std::size_t d = 0; d < kEmbeddingDim; ++d) {
              const double noise = spec.noise_std > 0.0 ? spec.noise_std * normal(noise_rng) : 0.0;
              out.cache.matrix.push_back(static_cast<float>(base[d] + noise));
            }
          }
        }
      }
    }
  }
  return out;
}

/// Seeded random unit-norm priors carrying the real prompt strings, for
/// pipelines run on synthetic caches.
inline PriorTable synthetic_priors(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  PriorTable table;
  for (int level = 1; level <= kNumLevels; ++level) {
    PriorEntry e;
    e.level = level;
    e.prompt = prompt_for_level(level);
    e.embedding.resize(kEmbeddingDim);
    for (float& x : e.embedding) x = normal(rng);
    table.entries.push_back(std::move(e));
  }
  return normalize_priors(std::move(table));
}

/// One line per record: crop, plant_id, day, level, angle, age, leaf_count.
inline void write_truth_csv(const EmbeddingCache& cache, const std::filesystem::path& path) {
  std::string text = "crop,plant_id,day,level,angle,age,leaf_count,embedding_row\n";
  for (const auto& r : cache.records) {
    text += r.crop.name() + "," + std::to_string(r.plant_id) + "," + std::to_string(r.day) + "," +
            std::to_string(r.level) + "," + std::to_string(r.angle) + "," + std::to_string(r.day) + "," +
            std::to_string(r.leaf_count) + "," + std::to_string(r.embedding_row) + "\n";
  }
  io::atomic_write(path, text);
}

}  // namespace phenofuse
