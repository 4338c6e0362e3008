// Dense vector/matrix primitives, stable softmax, KL divergence and exact
// top-k selection. Everything here is a pure function over plain doubles;
// all other modules build on these kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mira {

using Vec = std::vector<double>;

/// Row-major dense matrix of doubles. Rows are the natural unit (one sample,
/// one class center); use row(i) to get a cheap span view.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  void set_row(std::size_t r, std::span<const double> v) {
    std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }

  static Mat from_rows(const std::vector<Vec>& rows_in) {
    if (rows_in.empty()) return {};
    Mat m(rows_in.size(), rows_in.front().size());
    for (std::size_t i = 0; i < rows_in.size(); ++i) {
      if (rows_in[i].size() != m.cols)
        throw std::invalid_argument("Mat::from_rows: ragged rows");
      m.set_row(i, rows_in[i]);
    }
    return m;
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double x) { return std::isfinite(x); });
  }
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Numerically stable softmax: exp(x_i - max) / sum_j exp(x_j - max).
/// Output entries are >= 0 and sum to 1 within 1e-9 for any finite input.
inline Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

namespace detail {
constexpr double kProbEps = 1e-12;  // lower clamp applied to the second KL argument
}

/// KL(p || q) in nats. q entries are clamped below at 1e-12 before the log;
/// p_i = 0 terms contribute 0. Inputs must be probability vectors of equal
/// length; result is >= -1e-9 (tiny negatives only from the clamp).
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i] * (std::log(p[i]) - std::log(std::max(q[i], detail::kProbEps)));
  }
  return acc;
}

/// Indices of the k smallest values, ascending by (value, index). Ties prefer
/// the smaller index. k is clamped to values.size(); callers that care about
/// the clamp (it matters for mirror pools) check and log it themselves.
inline std::vector<std::size_t> top_k_smallest(std::span<const double> values,
                                               std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k_smallest: k must be positive");
  if (values.empty()) throw std::invalid_argument("top_k_smallest: empty input");
  k = std::min(k, values.size());

  using Entry = std::pair<double, std::size_t>;  // (value, index)
  // Bounded max-heap of the k best so far. Comparator keeps the worst entry
  // on top; on equal values the larger index counts as worse, which is what
  // gives the smaller-index tie-break in the result.
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (std::size_t i = 0; i < values.size(); ++i) {
    heap.emplace(values[i], i);
    if (heap.size() > k) heap.pop();
  }
  std::vector<Entry> kept;
  kept.reserve(k);
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::sort(kept.begin(), kept.end());
  std::vector<std::size_t> idx(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) idx[i] = kept[i].second;
  return idx;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline double euclidean_distance(std::span<const double> a,
                                 std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

/// 1 - exp(-||a-b||^2 / (2 sigma^2)). A distance in [0, 1) that is a strictly
/// monotone transform of the Euclidean one, so nearest-neighbor orderings
/// agree between the two.
inline double gaussian_kernel_distance(std::span<const double> a,
                                       std::span<const double> b,
                                       double sigma = 1.0) {
  if (sigma <= 0.0)
    throw std::invalid_argument("gaussian_kernel_distance: sigma must be > 0");
  return 1.0 - std::exp(-squared_distance(a, b) / (2.0 * sigma * sigma));
}

/// Which distance drives neighbor search and anchor-relative positions.
struct DistanceKind {
  enum class Kind { euclidean, gaussian };
  Kind kind = Kind::euclidean;
  double sigma = 1.0;  // used by gaussian only

  static DistanceKind euclidean() { return {Kind::euclidean, 1.0}; }
  static DistanceKind gaussian(double sigma = 1.0) {
    return {Kind::gaussian, sigma};
  }
};

inline double distance(const DistanceKind& kind, std::span<const double> a,
                       std::span<const double> b) {
  switch (kind.kind) {
    case DistanceKind::Kind::euclidean:
      return euclidean_distance(a, b);
    case DistanceKind::Kind::gaussian:
      return gaussian_kernel_distance(a, b, kind.sigma);
  }
  throw std::logic_error("distance: unknown kind");
}

inline std::string to_string(const DistanceKind& kind) {
  return kind.kind == DistanceKind::Kind::euclidean
             ? "euclidean"
             : "gaussian(sigma=" + std::to_string(kind.sigma) + ")";
}

}  // namespace mira
