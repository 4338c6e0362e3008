// Desk-scale trainable model standing in for a deep backbone: a one- or
// two-layer tanh perceptron producing f, a plain affine layer producing g,
// and a linear classifier head. Forward caches everything backward needs;
// backward is exact reverse-mode for any upstream gradients handed in by the
// loss modules. SGD uses the polynomial learning-rate schedule with a
// separate multiplier for the head layers.
#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mira/numerics.hpp"

namespace mira {

struct AffineLayer {
  Mat W;  // out x in
  Vec b;  // out
};

struct NetDims {
  std::size_t input = 2;
  std::size_t hidden = 32;   // width between the two backbone layers
  std::size_t feature = 16;  // d_f
  std::size_t embed = 8;     // d_g
  std::size_t classes = 2;   // M
  std::size_t backbone_layers = 2;  // 1 or 2
};

struct ModelParams {
  NetDims dims;
  std::vector<AffineLayer> backbone;  // tanh after each layer; output is f
  AffineLayer fc;                     // f -> g, no nonlinearity
  AffineLayer classifier;             // g -> logits
  std::uint64_t revision = 0;
};

namespace detail {
inline AffineLayer make_layer(std::size_t out, std::size_t in) {
  AffineLayer l;
  l.W = Mat(out, in, 0.0);
  l.b.assign(out, 0.0);
  return l;
}
}  // namespace detail

inline ModelParams zero_params(const NetDims& dims) {
  if (dims.backbone_layers < 1 || dims.backbone_layers > 2)
    throw std::invalid_argument("ModelParams: backbone must have 1 or 2 layers");
  ModelParams p;
  p.dims = dims;
  if (dims.backbone_layers == 1) {
    p.backbone.push_back(detail::make_layer(dims.feature, dims.input));
  } else {
    p.backbone.push_back(detail::make_layer(dims.hidden, dims.input));
    p.backbone.push_back(detail::make_layer(dims.feature, dims.hidden));
  }
  p.fc = detail::make_layer(dims.embed, dims.feature);
  p.classifier = detail::make_layer(dims.classes, dims.embed);
  return p;
}

/// All parameters drawn uniformly from [-0.1, 0.1].
inline ModelParams init_params(const NetDims& dims, std::mt19937_64& rng) {
  ModelParams p = zero_params(dims);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  auto fill = [&](AffineLayer& l) {
    for (double& w : l.W.data) w = u(rng);
    for (double& b : l.b) b = u(rng);
  };
  for (auto& l : p.backbone) fill(l);
  fill(p.fc);
  fill(p.classifier);
  return p;
}

/// Cached activations of one forward pass. f is the backbone output (the
/// last tanh activation), g the affine embedding, probs the softmax rows.
struct ForwardTrace {
  Mat input;
  std::vector<Mat> acts;  // tanh output per backbone layer
  Mat g;
  Mat logits;
  Mat probs;
  std::uint64_t params_revision = 0;

  const Mat& f() const { return acts.back(); }
};

namespace detail {
// Y = X * W^T + b
inline Mat affine_forward(const Mat& X, const AffineLayer& l) {
  Mat Y(X.rows, l.W.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto x = X.row(i);
    for (std::size_t o = 0; o < l.W.rows; ++o) {
      double acc = l.b[o];
      const auto w = l.W.row(o);
      for (std::size_t c = 0; c < l.W.cols; ++c) acc += x[c] * w[c];
      Y(i, o) = acc;
    }
  }
  return Y;
}
}  // namespace detail

inline ForwardTrace forward(const ModelParams& params, const Mat& batch) {
  if (batch.cols != params.dims.input)
    throw std::invalid_argument("forward: input dimension mismatch");
  ForwardTrace t;
  t.input = batch;
  t.params_revision = params.revision;
  const Mat* prev = &t.input;
  for (const auto& layer : params.backbone) {
    Mat a = detail::affine_forward(*prev, layer);
    for (double& v : a.data) v = std::tanh(v);
    t.acts.push_back(std::move(a));
    prev = &t.acts.back();
  }
  t.g = detail::affine_forward(t.acts.back(), params.fc);
  t.logits = detail::affine_forward(t.g, params.classifier);
  t.probs = Mat(t.logits.rows, t.logits.cols);
  for (std::size_t i = 0; i < t.logits.rows; ++i)
    t.probs.set_row(i, softmax(t.logits.row(i)));
  return t;
}

/// Upstream gradients the loss modules feed into backward. Any matrix may be
/// left empty and is then treated as zero.
struct LossGradients {
  Mat d_logits;  // n x M
  Mat d_g;       // n x d_g
  Mat d_f;       // n x d_f
};

struct ParamGrads {
  std::vector<AffineLayer> backbone;
  AffineLayer fc;
  AffineLayer classifier;
};

inline ParamGrads zero_grads(const ModelParams& p) {
  ParamGrads g;
  for (const auto& l : p.backbone)
    g.backbone.push_back(detail::make_layer(l.W.rows, l.W.cols));
  g.fc = detail::make_layer(p.fc.W.rows, p.fc.W.cols);
  g.classifier = detail::make_layer(p.classifier.W.rows, p.classifier.W.cols);
  return g;
}

inline void add_grads(ParamGrads& into, const ParamGrads& other) {
  auto add_layer = [](AffineLayer& a, const AffineLayer& b) {
    for (std::size_t i = 0; i < a.W.data.size(); ++i) a.W.data[i] += b.W.data[i];
    for (std::size_t i = 0; i < a.b.size(); ++i) a.b[i] += b.b[i];
  };
  for (std::size_t l = 0; l < into.backbone.size(); ++l)
    add_layer(into.backbone[l], other.backbone[l]);
  add_layer(into.fc, other.fc);
  add_layer(into.classifier, other.classifier);
}

namespace detail {
// Given upstream dY for Y = X * W^T + b, accumulate dW, db and return dX.
inline Mat affine_backward(const Mat& X, const AffineLayer& l, const Mat& dY,
                           AffineLayer& grad) {
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto x = X.row(i);
    const auto dy = dY.row(i);
    for (std::size_t o = 0; o < l.W.rows; ++o) {
      const double d = dy[o];
      if (d == 0.0) continue;
      auto gw = grad.W.row(o);
      for (std::size_t c = 0; c < l.W.cols; ++c) gw[c] += d * x[c];
      grad.b[o] += d;
    }
  }
  Mat dX(X.rows, X.cols, 0.0);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto dy = dY.row(i);
    auto dx = dX.row(i);
    for (std::size_t o = 0; o < l.W.rows; ++o) {
      const double d = dy[o];
      if (d == 0.0) continue;
      const auto w = l.W.row(o);
      for (std::size_t c = 0; c < l.W.cols; ++c) dx[c] += d * w[c];
    }
  }
  return dX;
}

inline void add_into(Mat& a, const Mat& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}
}  // namespace detail

/// Exact reverse-mode gradients for the upstream loss gradients in `lg`.
/// The trace must come from a forward pass against the same params revision.
inline ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                           const LossGradients& lg) {
  if (trace.params_revision != params.revision)
    throw std::logic_error("backward: stale forward trace");
  const std::size_t n = trace.input.rows;
  ParamGrads grads = zero_grads(params);

  Mat d_g(n, params.dims.embed, 0.0);
  if (lg.d_logits.rows > 0) {
    if (lg.d_logits.rows != n || lg.d_logits.cols != params.dims.classes)
      throw std::invalid_argument("backward: d_logits shape mismatch");
    d_g = detail::affine_backward(trace.g, params.classifier, lg.d_logits,
                                  grads.classifier);
  }
  if (lg.d_g.rows > 0) {
    if (lg.d_g.rows != n || lg.d_g.cols != params.dims.embed)
      throw std::invalid_argument("backward: d_g shape mismatch");
    detail::add_into(d_g, lg.d_g);
  }

  Mat d_f = detail::affine_backward(trace.f(), params.fc, d_g, grads.fc);
  if (lg.d_f.rows > 0) {
    if (lg.d_f.rows != n || lg.d_f.cols != params.dims.feature)
      throw std::invalid_argument("backward: d_f shape mismatch");
    detail::add_into(d_f, lg.d_f);
  }

  Mat upstream = std::move(d_f);
  for (std::size_t l = params.backbone.size(); l-- > 0;) {
    const Mat& act = trace.acts[l];
    for (std::size_t i = 0; i < upstream.data.size(); ++i)
      upstream.data[i] *= 1.0 - act.data[i] * act.data[i];  // tanh'
    const Mat& in = (l == 0) ? trace.input : trace.acts[l - 1];
    upstream = detail::affine_backward(in, params.backbone[l], upstream,
                                       grads.backbone[l]);
  }
  return grads;
}

/// eta_p = eta0 * (1 + alpha p)^(-beta), p in [0, 1].
struct LrSchedule {
  double eta0 = 0.001;
  double alpha = 10.0;
  double beta = 0.75;
};

inline double lr_at(const LrSchedule& s, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("lr_at: p must be in [0, 1]");
  return s.eta0 * std::pow(1.0 + s.alpha * p, -s.beta);
}

/// Backbone layers update at 1x the step size, the fc and classifier heads
/// at 10x.
struct LrGroups {
  double backbone = 1.0;
  double head = 10.0;
};

struct SgdOptions {
  double momentum = 0.0;      // 0 = plain SGD
  double weight_decay = 0.0;  // L2 added to the gradient
};

struct SgdState {
  ParamGrads velocity;
  bool initialized = false;
};

/// theta <- theta - lr * multiplier * grad. With the default options this is
/// the plain reference update; momentum and weight decay only engage when
/// explicitly switched on.
inline void sgd_step(ModelParams& params, const ParamGrads& grads, double lr,
                     const LrGroups& groups = {}, const SgdOptions& opts = {},
                     SgdState* state = nullptr) {
  if (opts.momentum != 0.0 && state == nullptr)
    throw std::invalid_argument("sgd_step: momentum requires an SgdState");
  if (state && !state->initialized) {
    state->velocity = zero_grads(params);
    state->initialized = true;
  }
  auto update = [&](AffineLayer& theta, const AffineLayer& g, AffineLayer* vel,
                    double mult) {
    auto step_one = [&](double& t, double raw_g, double* v) {
      double eff = raw_g + opts.weight_decay * t;
      if (opts.momentum != 0.0) {
        *v = opts.momentum * *v + eff;
        eff = *v;
      }
      t -= lr * mult * eff;
    };
    for (std::size_t i = 0; i < theta.W.data.size(); ++i)
      step_one(theta.W.data[i], g.W.data[i], vel ? &vel->W.data[i] : nullptr);
    for (std::size_t i = 0; i < theta.b.size(); ++i)
      step_one(theta.b[i], g.b[i], vel ? &vel->b[i] : nullptr);
  };
  const bool use_vel = opts.momentum != 0.0;
  for (std::size_t l = 0; l < params.backbone.size(); ++l)
    update(params.backbone[l], grads.backbone[l],
           use_vel ? &state->velocity.backbone[l] : nullptr, groups.backbone);
  update(params.fc, grads.fc, use_vel ? &state->velocity.fc : nullptr, groups.head);
  update(params.classifier, grads.classifier,
         use_vel ? &state->velocity.classifier : nullptr, groups.head);
  ++params.revision;
}

// ---------------------------------------------------------------------------
// Checkpoint format, plain text, version 1:
//
//   mira-params v1
//   dims <input> <hidden> <feature> <embed> <classes> <backbone_layers>
//   array <name> <rows> <cols>
//   <cols values per line, one line per row, printed with %.17g>
//
// 17 significant digits round-trip IEEE doubles exactly, so save followed by
// load reproduces the parameters bit for bit.
// ---------------------------------------------------------------------------

namespace detail {
inline void write_array(std::ostream& os, const std::string& name, const Mat& m) {
  os << "array " << name << ' ' << m.rows << ' ' << m.cols << '\n';
  char buf[64];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      os << buf << (c + 1 < m.cols ? " " : "");
    }
    os << '\n';
  }
}

inline Mat read_array(std::istream& is, const std::string& expect_name) {
  std::string tag, name;
  std::size_t rows = 0, cols = 0;
  if (!(is >> tag >> name >> rows >> cols) || tag != "array" || name != expect_name)
    throw std::runtime_error("checkpoint: expected array " + expect_name);
  Mat m(rows, cols);
  for (double& v : m.data)
    if (!(is >> v)) throw std::runtime_error("checkpoint: truncated array " + expect_name);
  return m;
}

inline Mat vec_as_row(const Vec& v) {
  Mat m(1, v.size());
  m.data = v;
  return m;
}
}  // namespace detail

inline void save_params(const ModelParams& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_params: cannot open " + path);
  os << "mira-params v1\n";
  os << "dims " << p.dims.input << ' ' << p.dims.hidden << ' ' << p.dims.feature
     << ' ' << p.dims.embed << ' ' << p.dims.classes << ' '
     << p.dims.backbone_layers << '\n';
  for (std::size_t l = 0; l < p.backbone.size(); ++l) {
    detail::write_array(os, "backbone" + std::to_string(l) + ".W", p.backbone[l].W);
    detail::write_array(os, "backbone" + std::to_string(l) + ".b",
                        detail::vec_as_row(p.backbone[l].b));
  }
  detail::write_array(os, "fc.W", p.fc.W);
  detail::write_array(os, "fc.b", detail::vec_as_row(p.fc.b));
  detail::write_array(os, "classifier.W", p.classifier.W);
  detail::write_array(os, "classifier.b", detail::vec_as_row(p.classifier.b));
  if (!os) throw std::runtime_error("save_params: write failed for " + path);
}

inline ModelParams load_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_params: cannot open " + path);
  std::string magic, version;
  is >> magic >> version;
  if (magic != "mira-params" || version != "v1")
    throw std::runtime_error("load_params: unrecognized checkpoint header");
  std::string tag;
  NetDims dims;
  if (!(is >> tag >> dims.input >> dims.hidden >> dims.feature >> dims.embed >>
        dims.classes >> dims.backbone_layers) ||
      tag != "dims")
    throw std::runtime_error("load_params: bad dims line");
  ModelParams p = zero_params(dims);
  for (std::size_t l = 0; l < p.backbone.size(); ++l) {
    p.backbone[l].W = detail::read_array(is, "backbone" + std::to_string(l) + ".W");
    p.backbone[l].b = detail::read_array(is, "backbone" + std::to_string(l) + ".b").data;
  }
  p.fc.W = detail::read_array(is, "fc.W");
  p.fc.b = detail::read_array(is, "fc.b").data;
  p.classifier.W = detail::read_array(is, "classifier.W");
  p.classifier.b = detail::read_array(is, "classifier.b").data;
  return p;
}

}  // namespace mira
