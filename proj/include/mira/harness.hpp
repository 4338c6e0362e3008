// End-to-end training loop, evaluation, and hyperparameter sweeps.
//
// One epoch: recompute source class anchors on f and g, k-means the target
// features (initialized at the source anchors) into pseudo labels and target
// anchors, refresh the auxiliary distribution, then run mini-batch steps.
// Each step draws one batch per domain, builds mirrors against the current
// opposite-domain pool, evaluates the total loss, and takes one SGD step at
// the scheduled learning rate. Everything is single-threaded and seeded, so
// a run is a pure function of (config, data).
//
// The training path never sees target labels: train_core() takes a
// label-free view of the target set, and the per-epoch accuracy metrics are
// produced by a caller-supplied hook that holds the hidden labels.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mira/alignment.hpp"
#include "mira/anchors.hpp"
#include "mira/config.hpp"
#include "mira/mirror.hpp"
#include "mira/network.hpp"
#include "mira/numerics.hpp"
#include "mira/objective.hpp"
#include "mira/synthgen.hpp"

namespace mira {

/// A training run aborts with this when any loss term stops being finite.
struct NumericalFailure : std::runtime_error {
  std::size_t epoch;
  std::size_t step;
  LossBreakdown losses;
  NumericalFailure(std::size_t e, std::size_t s, const LossBreakdown& l)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(e) +
                           ", step " + std::to_string(s)),
        epoch(e), step(s), losses(l) {}
};

struct EpochMetrics {
  std::size_t epoch = 0;
  LossBreakdown losses;  // per-step means; total recomputed from the means
  double target_accuracy = 0.0;
  double anchor_gap_f = 0.0;  // mean_c ||mu_c^s - mu_c^t|| on layer f
  double anchor_gap_g = 0.0;
  double inter_class_dist_f = 0.0;  // mean pairwise distance of mixed f centers
  double pseudo_label_agreement = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Single training step, factored out so gradient checks can drive exactly the
// function the trainer optimizes. The non-differentiable parts of a step
// (mirror provenance, anchors, the auxiliary distribution) are fixed inputs;
// only the features recomputed from the parameters vary.
// ---------------------------------------------------------------------------

/// Which loss terms contribute to the differentiated objective. Training uses
/// all of them; gradient checks isolate terms one at a time.
struct TermMask {
  bool source_ce = true;
  bool target_aux = true;
  bool mirror_f = true;
  bool mirror_g = true;
};

struct StepContext {
  const Mat* source_inputs = nullptr;
  const std::vector<int>* source_labels = nullptr;
  const Mat* target_inputs = nullptr;
  const Mat* z_batch = nullptr;  // auxiliary-distribution rows of this batch

  // Anchors for each domain side; in mixed mode all four point at the same
  // per-layer mixed anchors.
  const ClassAnchors* f_source_anchors = nullptr;
  const ClassAnchors* f_target_anchors = nullptr;
  const ClassAnchors* g_source_anchors = nullptr;
  const ClassAnchors* g_target_anchors = nullptr;

  // Frozen mirror provenance per layer and direction.
  std::vector<MirrorSample> f_target_mirrors, f_source_mirrors;
  std::vector<MirrorSample> g_target_mirrors, g_source_mirrors;

  // Full-pool mode: raw inputs of the full domains the provenance indices
  // refer to. Null means the opposite batch is the pool.
  const Mat* source_pool_inputs = nullptr;
  const Mat* target_pool_inputs = nullptr;

  double gamma = 1.0;
  bool use_f = true;
  bool use_g = true;
  DistanceKind distance = DistanceKind::euclidean();
  bool symmetric_kl = false;
  TermMask mask;
};

struct StepOutput {
  LossBreakdown losses;
  double objective = 0.0;  // the scalar `grads` differentiates (mask-weighted)
  ParamGrads grads;
};

namespace detail {

inline void add_scaled(Mat& into, const Mat& from, double scale) {
  for (std::size_t i = 0; i < into.data.size(); ++i)
    into.data[i] += scale * from.data[i];
}

}  // namespace detail

inline StepOutput step_eval(const ModelParams& params, const StepContext& ctx) {
  const Mat& xs = *ctx.source_inputs;
  const Mat& xt = *ctx.target_inputs;
  const ForwardTrace trace_s = forward(params, xs);
  const ForwardTrace trace_t = forward(params, xt);

  const bool full_src_pool = ctx.source_pool_inputs != nullptr;
  const bool full_tgt_pool = ctx.target_pool_inputs != nullptr;
  ForwardTrace trace_sp, trace_tp;
  if (full_src_pool) trace_sp = forward(params, *ctx.source_pool_inputs);
  if (full_tgt_pool) trace_tp = forward(params, *ctx.target_pool_inputs);

  StepOutput out;

  const double source_ce = source_cross_entropy(trace_s.probs, *ctx.source_labels);
  const double target_aux = target_loss(trace_t.probs, *ctx.z_batch);

  LossGradients lg_s, lg_t, lg_sp, lg_tp;
  lg_s.d_logits = Mat(xs.rows, params.dims.classes, 0.0);
  lg_t.d_logits = Mat(xt.rows, params.dims.classes, 0.0);

  // Closed-form softmax cross-entropy gradients: (p - y)/n and (p - z)/n.
  // These are the exact derivatives wherever the probability clamp in the
  // loss value is inactive (everywhere in practice) and stay bounded where
  // it is, so confidently-wrong predictions keep a restoring force.
  if (ctx.mask.source_ce) {
    const double inv_n = 1.0 / static_cast<double>(xs.rows);
    for (std::size_t i = 0; i < xs.rows; ++i) {
      const auto y = static_cast<std::size_t>((*ctx.source_labels)[i]);
      for (std::size_t c = 0; c < params.dims.classes; ++c)
        lg_s.d_logits(i, c) =
            inv_n * (trace_s.probs(i, c) - (c == y ? 1.0 : 0.0));
    }
  }
  if (ctx.mask.target_aux) {
    const double inv_n = 1.0 / static_cast<double>(xt.rows);
    for (std::size_t i = 0; i < xt.rows; ++i)
      for (std::size_t c = 0; c < params.dims.classes; ++c)
        lg_t.d_logits(i, c) =
            inv_n * (trace_t.probs(i, c) - (*ctx.z_batch)(i, c));
  }

  double mirror_f_value = 0.0, mirror_g_value = 0.0;
  auto run_mirror_layer =
      [&](bool enabled, bool masked, const Mat& feat_s, const Mat& feat_t,
          const Mat* pool_s_feat, const Mat* pool_t_feat,
          const std::vector<MirrorSample>& src_m, const std::vector<MirrorSample>& tgt_m,
          const ClassAnchors* a_src, const ClassAnchors* a_tgt, Mat& d_s, Mat& d_t,
          Mat* d_sp, Mat* d_tp) -> double {
    if (!enabled || ctx.gamma == 0.0) return 0.0;
    MirrorLossOptions opts;
    opts.symmetric_kl = ctx.symmetric_kl;
    opts.source_pool = pool_s_feat;
    opts.target_pool = pool_t_feat;
    const MirrorLossValue v = detail::mirror_loss_impl(feat_s, feat_t, src_m, tgt_m,
                                                       *a_src, *a_tgt, ctx.distance, opts);
    if (masked) {
      const double w = ctx.gamma;
      if (d_s.rows == 0) d_s = Mat(feat_s.rows, feat_s.cols, 0.0);
      if (d_t.rows == 0) d_t = Mat(feat_t.rows, feat_t.cols, 0.0);
      detail::add_scaled(d_s, v.grad_source, w);
      detail::add_scaled(d_t, v.grad_target, w);
      if (d_sp && v.grad_source_pool.rows > 0) {
        if (d_sp->rows == 0) *d_sp = Mat(v.grad_source_pool.rows, v.grad_source_pool.cols, 0.0);
        detail::add_scaled(*d_sp, v.grad_source_pool, w);
      }
      if (d_tp && v.grad_target_pool.rows > 0) {
        if (d_tp->rows == 0) *d_tp = Mat(v.grad_target_pool.rows, v.grad_target_pool.cols, 0.0);
        detail::add_scaled(*d_tp, v.grad_target_pool, w);
      }
    }
    return v.value;
  };

  mirror_f_value = run_mirror_layer(
      ctx.use_f, ctx.mask.mirror_f, trace_s.f(), trace_t.f(),
      full_src_pool ? &trace_sp.f() : nullptr, full_tgt_pool ? &trace_tp.f() : nullptr,
      ctx.f_source_mirrors, ctx.f_target_mirrors, ctx.f_source_anchors,
      ctx.f_target_anchors, lg_s.d_f, lg_t.d_f,
      full_src_pool ? &lg_sp.d_f : nullptr, full_tgt_pool ? &lg_tp.d_f : nullptr);
  mirror_g_value = run_mirror_layer(
      ctx.use_g, ctx.mask.mirror_g, trace_s.g, trace_t.g,
      full_src_pool ? &trace_sp.g : nullptr, full_tgt_pool ? &trace_tp.g : nullptr,
      ctx.g_source_mirrors, ctx.g_target_mirrors, ctx.g_source_anchors,
      ctx.g_target_anchors, lg_s.d_g, lg_t.d_g,
      full_src_pool ? &lg_sp.d_g : nullptr, full_tgt_pool ? &lg_tp.d_g : nullptr);

  if (!ctx.mask.source_ce) lg_s.d_logits = Mat();
  if (!ctx.mask.target_aux) lg_t.d_logits = Mat();

  out.grads = backward(params, trace_s, lg_s);
  add_grads(out.grads, backward(params, trace_t, lg_t));
  if (full_src_pool && (lg_sp.d_f.rows > 0 || lg_sp.d_g.rows > 0))
    add_grads(out.grads, backward(params, trace_sp, lg_sp));
  if (full_tgt_pool && (lg_tp.d_f.rows > 0 || lg_tp.d_g.rows > 0))
    add_grads(out.grads, backward(params, trace_tp, lg_tp));

  out.losses = total_loss(source_ce, target_aux, mirror_f_value, mirror_g_value,
                          ctx.gamma);
  out.objective = (ctx.mask.source_ce ? source_ce : 0.0) +
                  (ctx.mask.target_aux ? target_aux : 0.0) +
                  ctx.gamma * ((ctx.mask.mirror_f ? mirror_f_value : 0.0) +
                               (ctx.mask.mirror_g ? mirror_g_value : 0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Epoch boundary state: anchors, pseudo labels and the auxiliary distribution
// computed on the full domains under the current parameters.
// ---------------------------------------------------------------------------

struct EpochState {
  ClassAnchors src_f, src_g;      // labeled source anchors
  ClassAnchors tgt_f, tgt_g;      // k-means target anchors
  ClassAnchors mixed_f, mixed_g;  // 0.5/0.5 mix
  PseudoLabels pseudo_f, pseudo_g;
  AuxiliaryDistribution aux;
};

inline EpochState compute_epoch_state(const ModelParams& params, const Mat& xs,
                                      const std::vector<int>& ys, std::size_t M,
                                      const Mat& xt, const RunConfig& cfg,
                                      std::size_t epoch) {
  const ForwardTrace ts = forward(params, xs);
  const ForwardTrace tt = forward(params, xt);
  EpochState st;
  st.src_f = labeled_anchors(ts.f(), ys, M, LayerTag::f);
  st.src_g = labeled_anchors(ts.g, ys, M, LayerTag::g);
  auto km_f = kmeans_pseudo_labels(tt.f(), st.src_f, cfg.kmeans_max_iters, cfg.kmeans_tol);
  auto km_g = kmeans_pseudo_labels(tt.g, st.src_g, cfg.kmeans_max_iters, cfg.kmeans_tol);
  st.tgt_f = std::move(km_f.anchors);
  st.tgt_g = std::move(km_g.anchors);
  st.pseudo_f = std::move(km_f.pseudo);
  st.pseudo_g = std::move(km_g.pseudo);
  st.mixed_f = mixed_anchors(st.src_f, st.tgt_f);
  st.mixed_g = mixed_anchors(st.src_g, st.tgt_g);
  st.aux = auxiliary_distribution(tt.probs, epoch);
  return st;
}

namespace detail {

inline double anchor_gap(const ClassAnchors& a, const ClassAnchors& b) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < a.num_classes(); ++c) {
    if (a.flagged(c) || b.flagged(c)) continue;
    sum += euclidean_distance(a.centers.row(c), b.centers.row(c));
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline double inter_class_distance(const ClassAnchors& a) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < a.num_classes(); ++c) {
    if (a.flagged(c)) continue;
    for (std::size_t d = c + 1; d < a.num_classes(); ++d) {
      if (a.flagged(d)) continue;
      sum += euclidean_distance(a.centers.row(c), a.centers.row(d));
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline Mat gather_rows(const Mat& m, const std::vector<std::size_t>& idx) {
  Mat out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) out.set_row(i, m.row(idx[i]));
  return out;
}

}  // namespace detail

/// Per-epoch evaluation produced by the caller of train_core; this is the
/// only place hidden target labels are consulted.
struct EpochEval {
  double target_accuracy = 0.0;
  double pseudo_label_agreement = 0.0;
};
using EvalHook = std::function<EpochEval(const ModelParams&, const std::vector<int>& pseudo_f)>;

/// Label-free view of the target set; the type carries no labels, so the
/// training path cannot read them.
struct UnlabeledSet {
  const Mat* features = nullptr;
};

inline TrainResult train_core(const RunConfig& cfg, const Mat& source_features,
                              const std::vector<int>& source_labels, std::size_t M,
                              UnlabeledSet target, const EvalHook& hook = {}) {
  validate_config(cfg);
  const Mat& xs = source_features;
  const Mat& xt = *target.features;
  if (xs.rows == 0 || xt.rows == 0)
    throw std::invalid_argument("train: empty dataset");
  if (xs.cols != xt.cols)
    throw std::invalid_argument("train: source/target dimension mismatch");
  if (M < 2) throw std::invalid_argument("train: need at least 2 classes");

  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  NetDims dims;
  dims.input = xs.cols;
  dims.hidden = cfg.d_hidden;
  dims.feature = cfg.d_f;
  dims.embed = cfg.d_g;
  dims.classes = M;
  dims.backbone_layers = cfg.backbone_layers;
  result.params = init_params(dims, rng);
  if (cfg.epochs == 0) return result;

  const std::size_t n_s = xs.rows;
  const std::size_t n_t = xt.rows;
  const std::size_t bs = std::min(cfg.batch_size, n_s);
  const std::size_t bt = std::min(cfg.batch_size, n_t);
  const std::size_t steps =
      std::max<std::size_t>(1, std::max(n_s, n_t) / cfg.batch_size);

  // When each batch is its own full domain, the per-batch pool and the full
  // pool are the same set; use the batch path so both configs are identical.
  const bool full_pool =
      cfg.mirror_pool == MirrorPool::full && !(bs == n_s && bt == n_t);

  if (cfg.k > std::min(bs, bt))
    result.warnings.push_back("k=" + std::to_string(cfg.k) +
                              " exceeds the smallest batch pool; clamped during "
                              "mirror search");

  LrGroups groups{1.0, cfg.head_lr_multiplier};
  SgdOptions sgd_opts{cfg.momentum, cfg.weight_decay};
  SgdState sgd_state;

  std::vector<std::size_t> order_s(n_s), order_t(n_t);
  std::iota(order_s.begin(), order_s.end(), 0);
  std::iota(order_t.begin(), order_t.end(), 0);

  EpochState state =
      compute_epoch_state(result.params, xs, source_labels, M, xt, cfg, 0);
  if (!state.aux.clamped_columns.empty())
    result.warnings.push_back("auxiliary distribution clamped " +
                              std::to_string(state.aux.clamped_columns.size()) +
                              " empty class columns at epoch 0");

  const bool use_f = cfg.mirror_layers != MirrorLayers::g;
  const bool use_g = cfg.mirror_layers != MirrorLayers::f;
  const MirrorConfig mirror_cfg{cfg.k, cfg.distance, cfg.weighting};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order_s.begin(), order_s.end(), rng);
    std::shuffle(order_t.begin(), order_t.end(), rng);
    const double lr =
        lr_at(cfg.lr, static_cast<double>(epoch) / static_cast<double>(cfg.epochs));

    LossBreakdown sums;
    sums.gamma = cfg.gamma;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::size_t> idx_s(bs), idx_t(bt);
      for (std::size_t i = 0; i < bs; ++i) idx_s[i] = order_s[(step * bs + i) % n_s];
      for (std::size_t i = 0; i < bt; ++i) idx_t[i] = order_t[(step * bt + i) % n_t];
      // Canonical order: pools and batches are always sorted by sample index,
      // so neighbor tie-breaks never depend on the shuffle.
      std::sort(idx_s.begin(), idx_s.end());
      std::sort(idx_t.begin(), idx_t.end());

      const Mat xb_s = detail::gather_rows(xs, idx_s);
      const Mat xb_t = detail::gather_rows(xt, idx_t);
      std::vector<int> yb_s(bs);
      for (std::size_t i = 0; i < bs; ++i) yb_s[i] = source_labels[idx_s[i]];
      const Mat zb = detail::gather_rows(state.aux.z, idx_t);

      StepContext ctx;
      ctx.source_inputs = &xb_s;
      ctx.source_labels = &yb_s;
      ctx.target_inputs = &xb_t;
      ctx.z_batch = &zb;
      if (cfg.anchor_mode == AnchorMode::mixed) {
        ctx.f_source_anchors = ctx.f_target_anchors = &state.mixed_f;
        ctx.g_source_anchors = ctx.g_target_anchors = &state.mixed_g;
      } else {
        ctx.f_source_anchors = &state.src_f;
        ctx.f_target_anchors = &state.tgt_f;
        ctx.g_source_anchors = &state.src_g;
        ctx.g_target_anchors = &state.tgt_g;
      }
      ctx.gamma = cfg.gamma;
      ctx.use_f = use_f;
      ctx.use_g = use_g;
      ctx.distance = cfg.distance;
      ctx.symmetric_kl = cfg.symmetric_kl;
      if (full_pool) {
        ctx.source_pool_inputs = &xs;
        ctx.target_pool_inputs = &xt;
      }

      if (cfg.gamma > 0.0) {
        // Mirror provenance from the current features; frozen for this step.
        const ForwardTrace tb_s = forward(result.params, xb_s);
        const ForwardTrace tb_t = forward(result.params, xb_t);
        const ForwardTrace* pool_s = &tb_s;
        const ForwardTrace* pool_t = &tb_t;
        ForwardTrace tp_s, tp_t;
        if (full_pool) {
          tp_s = forward(result.params, xs);
          tp_t = forward(result.params, xt);
          pool_s = &tp_s;
          pool_t = &tp_t;
        }
        if (use_f) {
          ctx.f_target_mirrors =
              batch_mirrors(tb_t.f(), pool_s->f(), mirror_cfg, Domain::target);
          ctx.f_source_mirrors =
              batch_mirrors(tb_s.f(), pool_t->f(), mirror_cfg, Domain::source);
        }
        if (use_g) {
          ctx.g_target_mirrors =
              batch_mirrors(tb_t.g, pool_s->g, mirror_cfg, Domain::target);
          ctx.g_source_mirrors =
              batch_mirrors(tb_s.g, pool_t->g, mirror_cfg, Domain::source);
        }
      }

      StepOutput so = step_eval(result.params, ctx);
      if (!so.losses.finite()) throw NumericalFailure(epoch, step, so.losses);
      sums.source_ce += so.losses.source_ce;
      sums.target_aux += so.losses.target_aux;
      sums.mirror_f += so.losses.mirror_f;
      sums.mirror_g += so.losses.mirror_g;

      sgd_step(result.params, so.grads, lr, groups, sgd_opts,
               cfg.momentum != 0.0 ? &sgd_state : nullptr);
    }

    // End-of-epoch state doubles as the next epoch's anchors and z.
    EpochState next = compute_epoch_state(result.params, xs, source_labels, M, xt,
                                          cfg, epoch + 1);

    EpochMetrics em;
    em.epoch = epoch;
    const double inv_steps = 1.0 / static_cast<double>(steps);
    em.losses = total_loss(sums.source_ce * inv_steps, sums.target_aux * inv_steps,
                           sums.mirror_f * inv_steps, sums.mirror_g * inv_steps,
                           cfg.gamma);
    em.anchor_gap_f = detail::anchor_gap(next.src_f, next.tgt_f);
    em.anchor_gap_g = detail::anchor_gap(next.src_g, next.tgt_g);
    em.inter_class_dist_f = detail::inter_class_distance(next.mixed_f);
    if (hook) {
      const EpochEval ev = hook(result.params, next.pseudo_f.labels);
      em.target_accuracy = ev.target_accuracy;
      em.pseudo_label_agreement = ev.pseudo_label_agreement;
    }
    result.metrics.push_back(em);
    state = std::move(next);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
  double accuracy = 0.0;
  std::vector<double> per_class_error;        // 1 - recall per class
  std::vector<std::size_t> per_class_count;
  struct PatternError {
    int label = 0;
    int subpattern = 0;
    std::size_t count = 0;
    double error = 0.0;
  };
  std::vector<PatternError> per_pattern;  // filled when subpattern tags exist
  std::vector<int> predictions;
};

/// Argmax-of-probs accuracy with per-class (and, when tagged, per-subpattern)
/// error breakdown. Rows with label -1 are skipped in the accuracy counts.
inline Evaluation evaluate(const ModelParams& params, const DomainDataset& data) {
  const ForwardTrace t = forward(params, data.features);
  Evaluation ev;
  ev.predictions.resize(data.size());
  const std::size_t M = params.dims.classes;
  ev.per_class_error.assign(M, 0.0);
  ev.per_class_count.assign(M, 0);
  std::vector<std::size_t> per_class_correct(M, 0);

  std::size_t labeled = 0, correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < M; ++c)
      if (t.probs(i, c) > t.probs(i, arg)) arg = c;
    ev.predictions[i] = static_cast<int>(arg);
    const int y = data.labels.empty() ? -1 : data.labels[i];
    if (y < 0) continue;
    ++labeled;
    ++ev.per_class_count[static_cast<std::size_t>(y)];
    if (static_cast<std::size_t>(y) == arg) {
      ++correct;
      ++per_class_correct[static_cast<std::size_t>(y)];
    }
  }
  ev.accuracy = labeled == 0 ? 0.0
                             : static_cast<double>(correct) / static_cast<double>(labeled);
  for (std::size_t c = 0; c < M; ++c)
    ev.per_class_error[c] =
        ev.per_class_count[c] == 0
            ? 0.0
            : 1.0 - static_cast<double>(per_class_correct[c]) /
                        static_cast<double>(ev.per_class_count[c]);

  if (!data.subpatterns.empty() && !data.labels.empty()) {
    std::map<std::pair<int, int>, std::pair<std::size_t, std::size_t>> buckets;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] < 0) continue;
      auto& b = buckets[{data.labels[i], data.subpatterns[i]}];
      ++b.first;
      if (ev.predictions[i] != data.labels[i]) ++b.second;
    }
    for (const auto& [key, counts] : buckets)
      ev.per_pattern.push_back({key.first, key.second, counts.first,
                                static_cast<double>(counts.second) /
                                    static_cast<double>(counts.first)});
  }
  return ev;
}

/// Labeled-source / hidden-label-target wrapper around train_core. The hook
/// it installs is the only reader of the target labels.
inline TrainResult train(const RunConfig& cfg, const DomainDataset& source,
                         const DomainDataset& target) {
  if (source.labels.empty() ||
      std::any_of(source.labels.begin(), source.labels.end(),
                  [](int y) { return y < 0; }))
    throw std::invalid_argument("train: source labels must all be present");
  int max_label = 0;
  for (int y : source.labels) max_label = std::max(max_label, y);
  const auto M = static_cast<std::size_t>(max_label + 1);

  const bool target_labeled =
      !target.labels.empty() &&
      std::any_of(target.labels.begin(), target.labels.end(),
                  [](int y) { return y >= 0; });
  EvalHook hook;
  if (target_labeled) {
    hook = [&](const ModelParams& params, const std::vector<int>& pseudo_f) {
      EpochEval ev;
      ev.target_accuracy = evaluate(params, target).accuracy;
      std::size_t labeled = 0, agree = 0;
      for (std::size_t i = 0; i < target.labels.size(); ++i) {
        if (target.labels[i] < 0) continue;
        ++labeled;
        if (pseudo_f[i] == target.labels[i]) ++agree;
      }
      ev.pseudo_label_agreement =
          labeled == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(labeled);
      return ev;
    };
  }
  return train_core(cfg, source.features, source.labels, M,
                    UnlabeledSet{&target.features}, hook);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxisKind { k, gamma, ablation };

inline const char* to_string(SweepAxisKind k) {
  switch (k) {
    case SweepAxisKind::k: return "k";
    case SweepAxisKind::gamma: return "gamma";
    default: return "ablation";
  }
}

inline std::vector<std::string> default_axis_values(SweepAxisKind kind) {
  switch (kind) {
    case SweepAxisKind::k: return {"1", "3", "5", "7", "9"};
    case SweepAxisKind::gamma: return {"0", "1", "2", "3"};
    default: return {"baseline", "fc", "bk", "both"};
  }
}

/// Apply one axis value to a config copy. Ablation rows: baseline disables
/// the mirror loss (gamma 0), fc applies it to layer g only, bk to layer f
/// only, both to both layers.
inline void apply_axis_value(RunConfig& cfg, SweepAxisKind kind,
                             const std::string& value) {
  if (kind == SweepAxisKind::k) {
    cfg.k = detail::parse_number<std::size_t>("k", value);
  } else if (kind == SweepAxisKind::gamma) {
    cfg.gamma = detail::parse_number<double>("gamma", value);
  } else {
    if (value == "baseline") cfg.gamma = 0.0;
    else if (value == "fc") cfg.mirror_layers = MirrorLayers::g;
    else if (value == "bk") cfg.mirror_layers = MirrorLayers::f;
    else if (value == "both") cfg.mirror_layers = MirrorLayers::both;
    else throw ConfigError("sweep: unknown ablation row '" + value + "'");
  }
}

struct SweepCell {
  std::string axis;
  std::string value;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  bool failed = false;
  std::string error;
};

struct SweepSummaryRow {
  std::string value;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::size_t completed = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepSummaryRow> summary;
};

inline SweepResult sweep(const RunConfig& base, SweepAxisKind kind,
                         const std::vector<std::string>& values,
                         const std::vector<std::uint64_t>& seeds,
                         const DomainDataset& source, const DomainDataset& target) {
  if (values.empty() || seeds.empty())
    throw ConfigError("sweep: need at least one axis value and one seed");
  SweepResult result;
  for (const auto& value : values) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t ok = 0;
    for (const auto seed : seeds) {
      SweepCell cell;
      cell.axis = to_string(kind);
      cell.value = value;
      cell.seed = seed;
      try {
        RunConfig cfg = base;
        apply_axis_value(cfg, kind, value);
        cfg.seed = seed;
        const TrainResult tr = train(cfg, source, target);
        cell.accuracy = evaluate(tr.params, target).accuracy;
        sum += cell.accuracy;
        sum2 += cell.accuracy * cell.accuracy;
        ++ok;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      result.cells.push_back(std::move(cell));
    }
    SweepSummaryRow row;
    row.value = value;
    row.completed = ok;
    if (ok > 0) {
      row.mean_accuracy = sum / static_cast<double>(ok);
      const double var =
          std::max(0.0, sum2 / static_cast<double>(ok) -
                            row.mean_accuracy * row.mean_accuracy);
      row.std_accuracy = std::sqrt(var);
    }
    result.summary.push_back(std::move(row));
  }
  return result;
}

}  // namespace mira
