// Supervised source loss, the per-epoch auxiliary distribution that acts as
// soft pseudo labels for the target, the target loss against it, and the
// total-loss assembly.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mira/numerics.hpp"

namespace mira {

/// Mean negative log-likelihood of the true class: -(1/n) sum_i ln p_i[y_i].
/// Probabilities are clamped at 1e-12 before the log.
inline double source_cross_entropy(const Mat& probs, const std::vector<int>& labels) {
  if (probs.rows != labels.size())
    throw std::invalid_argument("source_cross_entropy: length mismatch");
  if (probs.rows == 0)
    throw std::invalid_argument("source_cross_entropy: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols)
      throw std::invalid_argument("source_cross_entropy: label out of range");
    acc -= std::log(std::max(probs(i, static_cast<std::size_t>(y)), detail::kProbEps));
  }
  return acc / static_cast<double>(probs.rows);
}

/// Soft pseudo labels for the target set: z_{i,c} proportional to
/// p_{i,c} / sqrt(sum_i p_{i,c}), rows renormalized. Recomputed once per
/// epoch and held fixed (no gradient flows through z).
struct AuxiliaryDistribution {
  Mat z;                                      // n^t x M, each row a distribution
  std::size_t epoch_computed = 0;
  std::vector<std::size_t> clamped_columns;   // columns whose mass hit the clamp
};

inline AuxiliaryDistribution auxiliary_distribution(const Mat& target_probs,
                                                    std::size_t epoch = 0) {
  if (target_probs.rows == 0)
    throw std::invalid_argument("auxiliary_distribution: empty input");
  AuxiliaryDistribution aux;
  aux.epoch_computed = epoch;
  const std::size_t n = target_probs.rows;
  const std::size_t M = target_probs.cols;

  Vec col_mass(M, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < M; ++c) col_mass[c] += target_probs(i, c);
  Vec inv_sqrt(M);
  for (std::size_t c = 0; c < M; ++c) {
    if (col_mass[c] < detail::kProbEps) {
      aux.clamped_columns.push_back(c);
      col_mass[c] = detail::kProbEps;
    }
    inv_sqrt[c] = 1.0 / std::sqrt(col_mass[c]);
  }

  aux.z = Mat(n, M);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < M; ++c) {
      aux.z(i, c) = target_probs(i, c) * inv_sqrt[c];
      row_sum += aux.z(i, c);
    }
    for (std::size_t c = 0; c < M; ++c) aux.z(i, c) /= row_sum;
  }
  return aux;
}

/// -(1/n^t) sum_i sum_c z_{i,c} ln p_{i,c}, with z frozen.
inline double target_loss(const Mat& target_probs, const Mat& z) {
  if (target_probs.rows != z.rows || target_probs.cols != z.cols)
    throw std::invalid_argument("target_loss: shape mismatch");
  if (target_probs.rows == 0)
    throw std::invalid_argument("target_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < target_probs.rows; ++i)
    for (std::size_t c = 0; c < target_probs.cols; ++c) {
      if (z(i, c) <= 0.0) continue;
      acc -= z(i, c) * std::log(std::max(target_probs(i, c), detail::kProbEps));
    }
  return acc / static_cast<double>(target_probs.rows);
}

/// The four loss terms and their weighted total.
struct LossBreakdown {
  double source_ce = 0.0;
  double target_aux = 0.0;
  double mirror_f = 0.0;
  double mirror_g = 0.0;
  double gamma = 1.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(source_ce) && std::isfinite(target_aux) &&
           std::isfinite(mirror_f) && std::isfinite(mirror_g) &&
           std::isfinite(total);
  }
};

inline LossBreakdown total_loss(double source_ce, double target_aux,
                                double mirror_f, double mirror_g, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("total_loss: gamma must be >= 0");
  LossBreakdown b;
  b.source_ce = source_ce;
  b.target_aux = target_aux;
  b.mirror_f = mirror_f;
  b.mirror_g = mirror_g;
  b.gamma = gamma;
  b.total = source_ce + target_aux + gamma * (mirror_f + mirror_g);
  return b;
}

}  // namespace mira
