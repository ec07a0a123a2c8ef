#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "phenofuse/embedding_store.hpp"
#include "phenofuse/error.hpp"

namespace phenofuse {

/// as_given sums views in list order. canonical first sorts the views
/// lexicographically, which makes the result bit-identical under any
/// permutation of the input.
enum class SummationOrder { as_given, canonical };

/// Element-wise mean over the available views, accumulated in double and
/// divided by the number of views actually present.
inline std::vector<float> aggregate_views(std::span<const std::span<const float>> views,
                                          SummationOrder order = SummationOrder::as_given) {
  if (views.empty()) throw InvalidArgument("aggregate_views: no views");
  const std::size_t dim = views.front().size();
  for (const auto& v : views) {
    if (v.size() != dim) throw InvalidArgument("aggregate_views: views have mixed dimensions");
  }
  std::vector<std::size_t> idx(views.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (order == SummationOrder::canonical) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(views[a].begin(), views[a].end(), views[b].begin(), views[b].end());
    });
  }
  std::vector<double> acc(dim, 0.0);
  for (std::size_t i : idx) {
    const auto& v = views[i];
    for (std::size_t d = 0; d < dim; ++d) acc[d] += static_cast<double>(v[d]);
  }
  const auto count = static_cast<double>(views.size());
  std::vector<float> mean(dim);
  for (std::size_t d = 0; d < dim; ++d) mean[d] = static_cast<float>(acc[d] / count);
  return mean;
}

inline std::vector<float> aggregate_views(const std::vector<std::vector<float>>& views,
                                          SummationOrder order = SummationOrder::as_given) {
  std::vector<std::span<const float>> spans(views.begin(), views.end());
  return aggregate_views(std::span<const std::span<const float>>(spans), order);
}

/// Mean embedding of a level group's views, in the group's angle order.
inline std::vector<float> aggregate_group(const EmbeddingCache& cache, const LevelGroup& group,
                                          SummationOrder order = SummationOrder::as_given) {
  std::vector<std::span<const float>> spans;
  spans.reserve(group.rows.size());
  for (std::size_t r : group.rows) {
    if (r >= cache.rows()) throw InvalidArgument("aggregate_group: embedding row out of range");
    spans.push_back(cache.row(r));
  }
  return aggregate_views(std::span<const std::span<const float>>(spans), order);
}

}  // namespace phenofuse
