// Local Neighbor Approximation: every sample gets a synthetic counterpart in
// the opposite domain, built as a convex combination of its k nearest
// opposite-domain neighbors. Neighbor selection is exact (no ANN index);
// pools at this scale are small.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mira/numerics.hpp"

namespace mira {

enum class Domain { source, target };

inline const char* to_string(Domain d) {
  return d == Domain::source ? "source" : "target";
}

/// How neighbor weights are assigned inside a mirror set.
///   uniform          -> each neighbor gets 1/k
///   inverse_distance -> w_i = exp(-d_i) / sum_j exp(-d_j); bounded, smooth,
///                       and nearly one-hot when one neighbor dominates
enum class WeightKind { uniform, inverse_distance };

inline const char* to_string(WeightKind w) {
  return w == WeightKind::uniform ? "uniform" : "inverse_distance";
}

/// A query's k nearest opposite-domain neighbors plus their mixing weights.
/// Weights are >= 0 and sum to 1; neighbor indices are distinct and point
/// into the pool the set was built against.
struct MirrorSet {
  std::size_t query_index = 0;
  std::vector<std::size_t> neighbor_indices;
  Vec weights;

  std::size_t k() const { return neighbor_indices.size(); }
};

/// The synthesized opposite-domain counterpart of a query sample. `vector`
/// always equals the provenance-weighted sum of the pool rows it was built
/// from, so it lies in the convex hull of its neighbors.
struct MirrorSample {
  Domain source_of_query = Domain::target;
  Vec vector;
  MirrorSet provenance;
};

struct MirrorConfig {
  std::size_t k = 3;
  DistanceKind distance = DistanceKind::euclidean();
  WeightKind weighting = WeightKind::uniform;
};

/// Select the k pool points nearest to `query` and assign weights.
/// k is clamped to the pool size when the pool is smaller.
inline MirrorSet build_mirror_set(std::span<const double> query, const Mat& pool,
                                  std::size_t k, const DistanceKind& dist,
                                  WeightKind weighting,
                                  std::size_t query_index = 0) {
  if (pool.rows == 0) throw std::invalid_argument("build_mirror_set: empty pool");
  if (query.size() != pool.cols)
    throw std::invalid_argument("build_mirror_set: dimension mismatch");

  Vec d(pool.rows);
  for (std::size_t i = 0; i < pool.rows; ++i) d[i] = distance(dist, query, pool.row(i));

  MirrorSet set;
  set.query_index = query_index;
  set.neighbor_indices = top_k_smallest(d, k);

  const std::size_t kk = set.neighbor_indices.size();
  if (weighting == WeightKind::uniform) {
    set.weights.assign(kk, 1.0 / static_cast<double>(kk));
  } else {
    Vec neg(kk);
    for (std::size_t i = 0; i < kk; ++i) neg[i] = -d[set.neighbor_indices[i]];
    set.weights = softmax(neg);
  }
  return set;
}

/// Materialize the mirror vector: the weighted sum of the provenance
/// neighbors' pool rows.
inline MirrorSample estimate_mirror(const MirrorSet& set, const Mat& pool,
                                    Domain source_of_query = Domain::target) {
  MirrorSample sample;
  sample.source_of_query = source_of_query;
  sample.provenance = set;
  sample.vector.assign(pool.cols, 0.0);
  for (std::size_t i = 0; i < set.k(); ++i) {
    const std::size_t idx = set.neighbor_indices[i];
    if (idx >= pool.rows)
      throw std::logic_error("estimate_mirror: neighbor index out of bounds");
    const auto row = pool.row(idx);
    const double w = set.weights[i];
    for (std::size_t c = 0; c < pool.cols; ++c) sample.vector[c] += w * row[c];
  }
  return sample;
}

/// One mirror per query row, in query order.
inline std::vector<MirrorSample> batch_mirrors(const Mat& queries, const Mat& pool,
                                               const MirrorConfig& config,
                                               Domain query_domain = Domain::target) {
  if (queries.rows == 0 || pool.rows == 0)
    throw std::invalid_argument("batch_mirrors: empty batch");
  if (queries.cols != pool.cols)
    throw std::invalid_argument("batch_mirrors: dimension mismatch");
  std::vector<MirrorSample> out;
  out.reserve(queries.rows);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    MirrorSet set = build_mirror_set(queries.row(q), pool, config.k,
                                     config.distance, config.weighting, q);
    out.push_back(estimate_mirror(set, pool, query_domain));
  }
  return out;
}

}  // namespace mira
