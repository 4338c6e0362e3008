// Class-wise centers per domain, k-means pseudo-labeling of the target
// initialized from the source centers, and the 0.5/0.5 mixed anchors the
// mirror loss measures relative positions against.
#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mira/numerics.hpp"

namespace mira {

enum class LayerTag { f, g };

/// One center per class plus the sample count behind it. A class with
/// count == 0 is "flagged": its center carries no evidence and consumers
/// (relative positions, mixing) must skip or degrade around it.
struct ClassAnchors {
  Mat centers;                      // M x d
  std::vector<std::size_t> counts;  // per class
  LayerTag layer_tag = LayerTag::f;

  std::size_t num_classes() const { return centers.rows; }
  std::size_t dim() const { return centers.cols; }
  bool flagged(std::size_t c) const { return counts[c] == 0; }
  std::size_t num_unflagged() const {
    std::size_t n = 0;
    for (auto c : counts) n += (c > 0);
    return n;
  }
};

/// Per-class means of labeled features. Classes absent from the batch keep a
/// zero center and are flagged via count 0; that is expected with small
/// batches, not an error.
inline ClassAnchors labeled_anchors(const Mat& features,
                                    const std::vector<int>& labels, std::size_t M,
                                    LayerTag tag = LayerTag::f) {
  if (features.rows == 0)
    throw std::invalid_argument("labeled_anchors: empty features");
  if (labels.size() != features.rows)
    throw std::invalid_argument("labeled_anchors: label count mismatch");
  ClassAnchors a;
  a.layer_tag = tag;
  a.centers = Mat(M, features.cols, 0.0);
  a.counts.assign(M, 0);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= M)
      throw std::invalid_argument("labeled_anchors: label out of range");
    const auto row = features.row(i);
    for (std::size_t c = 0; c < features.cols; ++c)
      a.centers(static_cast<std::size_t>(y), c) += row[c];
    ++a.counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t m = 0; m < M; ++m) {
    if (a.counts[m] == 0) continue;
    const double inv = 1.0 / static_cast<double>(a.counts[m]);
    for (std::size_t c = 0; c < features.cols; ++c) a.centers(m, c) *= inv;
  }
  return a;
}

/// Cluster assignment for each target sample plus the distance to its center.
struct PseudoLabels {
  std::vector<int> labels;
  Vec assignment_distances;
};

struct KmeansResult {
  PseudoLabels pseudo;
  ClassAnchors anchors;
  std::size_t iterations = 0;
};

namespace detail {
inline double kmeans_objective(const Mat& points, const Mat& centers,
                               const std::vector<int>& assign) {
  double obj = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i)
    obj += squared_distance(points.row(i),
                            centers.row(static_cast<std::size_t>(assign[i])));
  return obj;
}
}  // namespace detail

/// Lloyd's algorithm with fixed initial centers (the source class anchors).
/// Assignment ties go to the smaller class index; empty clusters keep their
/// previous center so the run stays deterministic and the source-center
/// semantics survive. The within-cluster SSE is checked to be non-increasing
/// on every iteration.
inline KmeansResult kmeans_pseudo_labels(const Mat& target_features,
                                         const ClassAnchors& init,
                                         std::size_t max_iters = 100,
                                         double tol = 1e-6) {
  if (max_iters < 1)
    throw std::invalid_argument("kmeans_pseudo_labels: max_iters must be >= 1");
  if (target_features.rows == 0)
    throw std::invalid_argument("kmeans_pseudo_labels: empty features");
  if (init.dim() != target_features.cols)
    throw std::invalid_argument("kmeans_pseudo_labels: dimension mismatch");

  const std::size_t n = target_features.rows;
  const std::size_t M = init.num_classes();
  Mat centers = init.centers;
  std::vector<int> assign(n, 0);
  Vec dist2(n, 0.0);

  auto assign_step = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t m = 0; m < M; ++m) {
        const double d2 = squared_distance(target_features.row(i), centers.row(m));
        if (d2 < best) {
          best = d2;
          best_c = static_cast<int>(m);
        }
      }
      if (assign[i] != best_c) changed = true;
      assign[i] = best_c;
      dist2[i] = best;
    }
    return changed;
  };

  double prev_obj = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> counts(M, 0);
  std::size_t iter = 0;
  for (; iter < max_iters; ++iter) {
    const bool changed = assign_step();
    const double obj_after_assign = detail::kmeans_objective(target_features, centers, assign);
    if (obj_after_assign > prev_obj + 1e-9 * (1.0 + prev_obj))
      throw std::logic_error("kmeans: objective increased at assignment step");

    // Recompute means; empty clusters keep the previous center.
    Mat next = centers;
    counts.assign(M, 0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < next.cols; ++c) next(m, c) = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = target_features.row(i);
      const auto m = static_cast<std::size_t>(assign[i]);
      for (std::size_t c = 0; c < next.cols; ++c) next(m, c) += row[c];
      ++counts[m];
    }
    double max_shift2 = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (counts[m] == 0) {
        next.set_row(m, centers.row(m));
        continue;
      }
      const double inv = 1.0 / static_cast<double>(counts[m]);
      for (std::size_t c = 0; c < next.cols; ++c) next(m, c) *= inv;
      max_shift2 = std::max(max_shift2, squared_distance(next.row(m), centers.row(m)));
    }
    centers = std::move(next);

    const double obj_after_update = detail::kmeans_objective(target_features, centers, assign);
    if (obj_after_update > obj_after_assign + 1e-9 * (1.0 + obj_after_assign))
      throw std::logic_error("kmeans: objective increased at update step");
    prev_obj = obj_after_update;

    if (!changed || max_shift2 < tol * tol) {
      ++iter;
      break;
    }
  }

  // Final assignment against the final centers so labels and centers agree.
  assign_step();
  counts.assign(M, 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];

  KmeansResult result;
  result.pseudo.labels = std::move(assign);
  result.pseudo.assignment_distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.pseudo.assignment_distances[i] = std::sqrt(dist2[i]);
  result.anchors.centers = std::move(centers);
  result.anchors.counts = std::move(counts);
  result.anchors.layer_tag = init.layer_tag;
  result.iterations = iter;
  return result;
}

/// 0.5/0.5 average of source and target centers. When one side is flagged the
/// mixed center degrades to the other side; only a class flagged on both
/// sides stays flagged in the mix.
inline ClassAnchors mixed_anchors(const ClassAnchors& source,
                                  const ClassAnchors& target) {
  if (source.num_classes() != target.num_classes() || source.dim() != target.dim())
    throw std::invalid_argument("mixed_anchors: shape mismatch");
  ClassAnchors mixed;
  mixed.layer_tag = source.layer_tag;
  mixed.centers = Mat(source.num_classes(), source.dim(), 0.0);
  mixed.counts.assign(source.num_classes(), 0);
  for (std::size_t m = 0; m < source.num_classes(); ++m) {
    mixed.counts[m] = source.counts[m] + target.counts[m];
    const bool sf = source.flagged(m);
    const bool tf = target.flagged(m);
    for (std::size_t c = 0; c < source.dim(); ++c) {
      if (sf && !tf)
        mixed.centers(m, c) = target.centers(m, c);
      else if (!sf && tf)
        mixed.centers(m, c) = source.centers(m, c);
      else
        mixed.centers(m, c) = 0.5 * source.centers(m, c) + 0.5 * target.centers(m, c);
    }
  }
  return mixed;
}

}  // namespace mira
