// Equivalence Regularization: anchor-relative position vectors and the
// bidirectional KL mirror loss, with analytic gradients for every
// participating feature vector. Anchors are fixed inputs here; no gradient
// flows into them. Mirror vectors are always re-derived from their
// provenance (indices + frozen weights) so a stale cached vector can never
// desynchronize the loss value from its gradient.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mira/anchors.hpp"
#include "mira/mirror.hpp"
#include "mira/numerics.hpp"

namespace mira {

/// Softmax over negative anchor distances, restricted to unflagged anchors.
/// Flagged positions are padded with 0 in the output vector.
struct RelativePosition {
  Vec q;
  const ClassAnchors* anchors = nullptr;
};

namespace detail {

struct RelPosWork {
  Vec q;                              // length M, zeros at flagged slots
  std::vector<std::size_t> support;   // unflagged anchor indices
};

inline RelPosWork relative_position_work(std::span<const double> x,
                                         const ClassAnchors& anchors,
                                         const DistanceKind& dist) {
  if (x.size() != anchors.dim())
    throw std::invalid_argument("relative_position: dimension mismatch");
  RelPosWork w;
  w.q.assign(anchors.num_classes(), 0.0);
  for (std::size_t m = 0; m < anchors.num_classes(); ++m)
    if (!anchors.flagged(m)) w.support.push_back(m);
  if (w.support.empty())
    throw std::invalid_argument("relative_position: all anchors flagged");
  Vec neg(w.support.size());
  for (std::size_t i = 0; i < w.support.size(); ++i)
    neg[i] = -distance(dist, x, anchors.centers.row(w.support[i]));
  const Vec s = softmax(neg);
  for (std::size_t i = 0; i < w.support.size(); ++i) w.q[w.support[i]] = s[i];
  return w;
}

/// d distance(x, mu) / d x, accumulated into `out` scaled by `scale`.
/// The Euclidean gradient at x == mu uses the zero subgradient.
inline void add_distance_grad(const DistanceKind& dist, std::span<const double> x,
                              std::span<const double> mu, double scale,
                              std::span<double> out) {
  const double r2 = squared_distance(x, mu);
  double factor = 0.0;
  if (dist.kind == DistanceKind::Kind::euclidean) {
    const double r = std::sqrt(r2);
    if (r == 0.0) return;
    factor = scale / r;
  } else {
    const double s2 = dist.sigma * dist.sigma;
    factor = scale * std::exp(-r2 / (2.0 * s2)) / s2;
  }
  for (std::size_t c = 0; c < x.size(); ++c) out[c] += factor * (x[c] - mu[c]);
}

/// Chain an upstream dL/dq through the softmax-over-negative-distances and
/// accumulate dL/dx into `out`.
inline void rel_pos_backward(std::span<const double> x, const ClassAnchors& anchors,
                             const DistanceKind& dist, const RelPosWork& w,
                             std::span<const double> dq, std::span<double> out) {
  double dot = 0.0;
  for (std::size_t m : w.support) dot += dq[m] * w.q[m];
  for (std::size_t m : w.support) {
    const double du = w.q[m] * (dq[m] - dot);  // d u_m, with u_m = -distance
    if (du == 0.0) continue;
    add_distance_grad(dist, x, anchors.centers.row(m), -du, out);
  }
}

/// KL(p || q) over the given class support, with value and both partials.
/// q is clamped below at kProbEps inside the log; the matching derivative is
/// zero on the clamped (flat) side.
struct KlTerm {
  double value = 0.0;
  Vec dp;
  Vec dq;
};

inline KlTerm kl_term(const Vec& p, const Vec& q,
                      const std::vector<std::size_t>& support) {
  KlTerm t;
  t.dp.assign(p.size(), 0.0);
  t.dq.assign(q.size(), 0.0);
  for (std::size_t c : support) {
    const double qs = std::max(q[c], kProbEps);
    if (p[c] > 0.0) {
      t.value += p[c] * (std::log(p[c]) - std::log(qs));
      if (q[c] > kProbEps) t.dq[c] = -p[c] / q[c];
    }
    t.dp[c] = std::log(std::max(p[c], kProbEps)) - std::log(qs) + 1.0;
  }
  return t;
}

inline std::vector<std::size_t> support_intersection(
    const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

}  // namespace detail

inline RelativePosition relative_position(std::span<const double> x,
                                          const ClassAnchors& anchors,
                                          const DistanceKind& dist) {
  auto w = detail::relative_position_work(x, anchors, dist);
  return RelativePosition{std::move(w.q), &anchors};
}

struct MirrorLossOptions {
  bool symmetric_kl = false;
  // Pools the mirror provenance indices refer to. Null means the opposite
  // batch itself (the per-batch search of the default training mode). When a
  // distinct pool is supplied, neighbor gradients land in grad_*_pool.
  const Mat* source_pool = nullptr;
  const Mat* target_pool = nullptr;
};

/// Loss value plus gradients for everything that participates: the batch
/// samples directly, and the pool features the mirrors were synthesized from
/// (through the frozen weights).
struct MirrorLossValue {
  double value = 0.0;
  Vec per_pair_target;   // KL term per target sample
  Vec per_pair_source;   // KL term per source sample
  Mat grad_source;       // w.r.t. source batch rows
  Mat grad_target;       // w.r.t. target batch rows
  Mat grad_source_pool;  // nonempty only when a distinct source pool was given
  Mat grad_target_pool;
};

namespace detail {

// One direction of Eq.-style mirror alignment: samples in `samples` (their
// own domain) vs mirrors synthesized from `pool` (the opposite domain).
// Gradients go to grad_samples and grad_pool.
inline void mirror_loss_term(const Mat& samples,
                             const std::vector<MirrorSample>& mirrors,
                             const Mat& pool, const ClassAnchors& mirror_anchors,
                             const ClassAnchors& sample_anchors,
                             const DistanceKind& dist, bool symmetric,
                             Vec& per_pair, Mat& grad_samples, Mat& grad_pool) {
  const std::size_t n = samples.rows;
  per_pair.assign(n, 0.0);
  if (n == 0) return;
  const double inv_n = 1.0 / static_cast<double>(n);

  Vec mirror_vec(pool.cols);
  Vec d_mirror(pool.cols);
  for (std::size_t j = 0; j < n; ++j) {
    const MirrorSet& prov = mirrors[j].provenance;
    if (prov.k() == 0)
      throw std::invalid_argument("mirror_loss: mirror with empty provenance");
    std::fill(mirror_vec.begin(), mirror_vec.end(), 0.0);
    for (std::size_t a = 0; a < prov.k(); ++a) {
      const std::size_t idx = prov.neighbor_indices[a];
      if (idx >= pool.rows)
        throw std::logic_error("mirror_loss: neighbor index out of bounds");
      const auto row = pool.row(idx);
      for (std::size_t c = 0; c < pool.cols; ++c)
        mirror_vec[c] += prov.weights[a] * row[c];
    }

    const auto wm = relative_position_work(mirror_vec, mirror_anchors, dist);
    const auto wx = relative_position_work(samples.row(j), sample_anchors, dist);
    const auto support = support_intersection(wm.support, wx.support);

    Vec d_qm(wm.q.size(), 0.0);
    Vec d_qx(wx.q.size(), 0.0);
    double value = 0.0;
    {
      const KlTerm fwd = kl_term(wm.q, wx.q, support);
      value = fwd.value;
      for (std::size_t c : support) {
        d_qm[c] += fwd.dp[c];
        d_qx[c] += fwd.dq[c];
      }
    }
    if (symmetric) {
      const KlTerm rev = kl_term(wx.q, wm.q, support);
      value = 0.5 * (value + rev.value);
      for (std::size_t c : support) {
        d_qm[c] = 0.5 * d_qm[c] + 0.5 * rev.dq[c];
        d_qx[c] = 0.5 * d_qx[c] + 0.5 * rev.dp[c];
      }
    }
    per_pair[j] = value;

    // Sample side.
    for (double& v : d_qx) v *= inv_n;
    rel_pos_backward(samples.row(j), sample_anchors, dist, wx, d_qx,
                     grad_samples.row(j));

    // Mirror side: chain into the mirror point, then distribute over the
    // neighbor pool rows with the frozen weights.
    for (double& v : d_qm) v *= inv_n;
    std::fill(d_mirror.begin(), d_mirror.end(), 0.0);
    rel_pos_backward(mirror_vec, mirror_anchors, dist, wm, d_qm, d_mirror);
    for (std::size_t a = 0; a < prov.k(); ++a) {
      auto out = grad_pool.row(prov.neighbor_indices[a]);
      const double w = prov.weights[a];
      for (std::size_t c = 0; c < pool.cols; ++c) out[c] += w * d_mirror[c];
    }
  }
}

inline MirrorLossValue mirror_loss_impl(const Mat& source_batch,
                                        const Mat& target_batch,
                                        const std::vector<MirrorSample>& source_mirrors,
                                        const std::vector<MirrorSample>& target_mirrors,
                                        const ClassAnchors& source_side_anchors,
                                        const ClassAnchors& target_side_anchors,
                                        const DistanceKind& dist,
                                        const MirrorLossOptions& opts) {
  if (source_mirrors.size() != source_batch.rows ||
      target_mirrors.size() != target_batch.rows)
    throw std::invalid_argument("mirror_loss: mirror/batch length mismatch");

  const Mat& source_pool = opts.source_pool ? *opts.source_pool : source_batch;
  const Mat& target_pool = opts.target_pool ? *opts.target_pool : target_batch;
  const bool distinct_src_pool = opts.source_pool != nullptr;
  const bool distinct_tgt_pool = opts.target_pool != nullptr;

  MirrorLossValue out;
  out.grad_source = Mat(source_batch.rows, source_batch.cols, 0.0);
  out.grad_target = Mat(target_batch.rows, target_batch.cols, 0.0);
  if (distinct_src_pool) out.grad_source_pool = Mat(source_pool.rows, source_pool.cols, 0.0);
  if (distinct_tgt_pool) out.grad_target_pool = Mat(target_pool.rows, target_pool.cols, 0.0);

  // Target samples vs their source-domain mirrors.
  mirror_loss_term(target_batch, target_mirrors, source_pool, source_side_anchors,
                   target_side_anchors, dist, opts.symmetric_kl, out.per_pair_target,
                   out.grad_target,
                   distinct_src_pool ? out.grad_source_pool : out.grad_source);
  // Source samples vs their target-domain mirrors.
  mirror_loss_term(source_batch, source_mirrors, target_pool, target_side_anchors,
                   source_side_anchors, dist, opts.symmetric_kl, out.per_pair_source,
                   out.grad_source,
                   distinct_tgt_pool ? out.grad_target_pool : out.grad_target);

  double mean_t = 0.0, mean_s = 0.0;
  for (double v : out.per_pair_target) mean_t += v;
  for (double v : out.per_pair_source) mean_s += v;
  if (!out.per_pair_target.empty()) mean_t /= static_cast<double>(out.per_pair_target.size());
  if (!out.per_pair_source.empty()) mean_s /= static_cast<double>(out.per_pair_source.size());
  out.value = mean_t + mean_s;
  return out;
}

}  // namespace detail

/// Mirror loss with one shared anchor set (the mixed centers) for all
/// relative positions.
inline MirrorLossValue mirror_loss(const Mat& source_batch, const Mat& target_batch,
                                   const std::vector<MirrorSample>& source_mirrors,
                                   const std::vector<MirrorSample>& target_mirrors,
                                   const ClassAnchors& anchors,
                                   const DistanceKind& dist,
                                   const MirrorLossOptions& opts = {}) {
  return detail::mirror_loss_impl(source_batch, target_batch, source_mirrors,
                                  target_mirrors, anchors, anchors, dist, opts);
}

/// Ablation variant: each point is positioned against its own domain's
/// anchors. The KL runs over classes unflagged on both sides.
inline MirrorLossValue mirror_loss_per_domain(
    const Mat& source_batch, const Mat& target_batch,
    const std::vector<MirrorSample>& source_mirrors,
    const std::vector<MirrorSample>& target_mirrors,
    const ClassAnchors& source_anchors, const ClassAnchors& target_anchors,
    const DistanceKind& dist, const MirrorLossOptions& opts = {}) {
  return detail::mirror_loss_impl(source_batch, target_batch, source_mirrors,
                                  target_mirrors, source_anchors, target_anchors,
                                  dist, opts);
}

/// A self-contained mirror-loss instance for gradient verification.
struct MirrorLossInstance {
  Mat source;
  Mat target;
  std::vector<MirrorSample> source_mirrors;
  std::vector<MirrorSample> target_mirrors;
  ClassAnchors anchors;
  DistanceKind distance = DistanceKind::euclidean();
  MirrorLossOptions opts;
};

/// Central finite differences vs the analytic gradient on every feature
/// coordinate of the instance. Returns the max relative error, where the
/// relative error uses max(|analytic|, |numeric|, 1e-5) as denominator.
inline double mirror_loss_gradient_check(const MirrorLossInstance& inst,
                                         double step = 1e-5) {
  MirrorLossInstance work = inst;
  auto eval = [&]() {
    return mirror_loss(work.source, work.target, work.source_mirrors,
                       work.target_mirrors, work.anchors, work.distance, work.opts)
        .value;
  };
  const MirrorLossValue analytic =
      mirror_loss(inst.source, inst.target, inst.source_mirrors, inst.target_mirrors,
                  inst.anchors, inst.distance, inst.opts);

  double max_rel = 0.0;
  auto check_mat = [&](Mat& m, const Mat& grad) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      const double saved = m.data[i];
      m.data[i] = saved + step;
      const double up = eval();
      m.data[i] = saved - step;
      const double down = eval();
      m.data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grad.data[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-5});
      max_rel = std::max(max_rel, rel);
    }
  };
  check_mat(work.source, analytic.grad_source);
  check_mat(work.target, analytic.grad_target);
  return max_rel;
}

}  // namespace mira
