// Synthetic biased-sampling domain generators. The 1-D generator reproduces
// the covariate-shift dilemma setup: class 1 is a truncated normal, class 0
// a uniform background, and the two domains live on shifted supports. The
// pattern generator draws each class from a mixture of sub-pattern
// components whose mixing ratios differ per domain, so the domain gap is a
// sampling-ratio bias plus an optional global shift.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mira/mirror.hpp"  // Domain
#include "mira/numerics.hpp"

namespace mira {

struct DomainDataset {
  Mat features;
  std::vector<int> labels;  // -1 marks a hidden/unknown label
  Domain domain = Domain::source;
  std::string generator_spec;
  std::vector<int> subpatterns;  // per-sample component tag, empty when n/a

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
};

/// Restrict class-1 draws to one side of the distribution mode; this is what
/// makes a finite sample biased relative to the underlying distribution.
enum class BiasSide { none, below_mode, above_mode };

struct DilemmaSpec {
  double source_lo = -3.0;
  double source_hi = 5.0;
  double target_lo = 4.0;
  double target_hi = 12.0;
  double source_mu = 1.0;
  double source_sigma = 1.0;
  double target_mu = 8.0;
  double target_sigma = 1.0;
  double class1_prior = 0.5;
  BiasSide source_bias = BiasSide::none;
  BiasSide target_bias = BiasSide::none;

  static DilemmaSpec unbiased() { return {}; }

  /// One-sided class-1 sampling in the target only: the two datasets keep
  /// overlapping class patterns (so counterparts exist across domains) but
  /// their sampled pattern ratios differ, which is what skews moment-based
  /// alignment away from the true offset.
  static DilemmaSpec biased() {
    DilemmaSpec s;
    s.target_bias = BiasSide::above_mode;
    return s;
  }
};

namespace detail {

inline void validate_dilemma(const DilemmaSpec& s) {
  auto check_domain = [](double lo, double hi, double mu, double sigma) {
    if (!(lo < hi)) throw std::invalid_argument("DilemmaSpec: empty support");
    if (!(sigma > 0.0)) throw std::invalid_argument("DilemmaSpec: sigma must be > 0");
    if (!(lo < mu && mu < hi))
      throw std::invalid_argument("DilemmaSpec: mode must lie inside the support");
  };
  check_domain(s.source_lo, s.source_hi, s.source_mu, s.source_sigma);
  check_domain(s.target_lo, s.target_hi, s.target_mu, s.target_sigma);
  if (!(s.class1_prior >= 0.0 && s.class1_prior <= 1.0))
    throw std::invalid_argument("DilemmaSpec: class prior must be in [0, 1]");
}

/// Rejection sampling from the untruncated normal; the support spans several
/// sigma for the default spec, so almost every draw is accepted.
inline double truncated_normal(std::mt19937_64& rng, double mu, double sigma,
                               double lo, double hi, BiasSide side) {
  std::normal_distribution<double> normal(mu, sigma);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    const double x = normal(rng);
    if (x < lo || x > hi) continue;
    if (side == BiasSide::below_mode && x > mu) continue;
    if (side == BiasSide::above_mode && x < mu) continue;
    return x;
  }
  throw std::logic_error("truncated_normal: rejection sampling did not accept");
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

inline std::pair<DomainDataset, DomainDataset> gen_dilemma_1d(
    const DilemmaSpec& spec, std::size_t n_source, std::size_t n_target,
    std::uint64_t seed) {
  detail::validate_dilemma(spec);
  if (n_source < 2 || n_target < 2)
    throw std::invalid_argument("gen_dilemma_1d: need at least 2 samples per domain");

  auto gen_one = [&](Domain dom, std::size_t n, std::uint64_t salt) {
    const bool src = dom == Domain::source;
    const double lo = src ? spec.source_lo : spec.target_lo;
    const double hi = src ? spec.source_hi : spec.target_hi;
    const double mu = src ? spec.source_mu : spec.target_mu;
    const double sigma = src ? spec.source_sigma : spec.target_sigma;
    const BiasSide side = src ? spec.source_bias : spec.target_bias;

    std::mt19937_64 rng(detail::mix_seed(seed, salt));
    std::bernoulli_distribution pick_class1(spec.class1_prior);
    std::uniform_real_distribution<double> background(lo, hi);

    DomainDataset ds;
    ds.domain = dom;
    ds.features = Mat(n, 1);
    ds.labels.resize(n);
    ds.generator_spec = std::string("dilemma1d/") + to_string(dom);
    for (std::size_t i = 0; i < n; ++i) {
      const bool c1 = pick_class1(rng);
      const double x = c1 ? detail::truncated_normal(rng, mu, sigma, lo, hi, side)
                          : background(rng);
      if (x < lo || x > hi)
        throw std::logic_error("gen_dilemma_1d: sample escaped the support");
      ds.features(i, 0) = x;
      ds.labels[i] = c1 ? 1 : 0;
    }
    return ds;
  };

  return {gen_one(Domain::source, n_source, 1), gen_one(Domain::target, n_target, 2)};
}

struct PatternComponent {
  Vec mean;
  double sigma = 1.0;  // isotropic
};

struct ClassPattern {
  std::vector<PatternComponent> components;
  Vec source_ratios;
  Vec target_ratios;
};

struct PatternSpec {
  std::vector<ClassPattern> classes;
  Vec target_shift;  // empty = no shift

  /// Two classes, each a mixture of the same two sub-pattern sites, with the
  /// mixing ratios swapped between the domains. The class signal is the
  /// small y offset; the sub-pattern site (x position) is the much wider
  /// separation, so a source-fit classifier tends to latch onto the site,
  /// which labels most of the ratio-swapped target wrongly. Component means
  /// are shared across domains; the gap is purely the sampling ratios.
  static PatternSpec default_biased() {
    PatternSpec s;
    auto cls = [](Vec m0, Vec m1, Vec rs, Vec rt) {
      ClassPattern c;
      c.components = {{std::move(m0), 0.5}, {std::move(m1), 0.5}};
      c.source_ratios = std::move(rs);
      c.target_ratios = std::move(rt);
      return c;
    };
    // class 0 sits at y = 0, class 1 at y = 1.5; sites at x = 0 and x = 6
    s.classes.push_back(cls({0.0, 0.0}, {6.0, 0.0}, {0.95, 0.05}, {0.05, 0.95}));
    s.classes.push_back(cls({0.0, 1.5}, {6.0, 1.5}, {0.05, 0.95}, {0.95, 0.05}));
    return s;
  }
};

namespace detail {
inline void validate_pattern(const PatternSpec& spec) {
  if (spec.classes.empty())
    throw std::invalid_argument("PatternSpec: need at least one class");
  std::size_t dim = 0;
  for (const auto& cls : spec.classes) {
    if (cls.components.empty())
      throw std::invalid_argument("PatternSpec: class without components");
    for (const auto& comp : cls.components) {
      if (comp.mean.empty())
        throw std::invalid_argument("PatternSpec: empty component mean");
      if (dim == 0) dim = comp.mean.size();
      if (comp.mean.size() != dim)
        throw std::invalid_argument("PatternSpec: inconsistent dimensions");
      if (!(comp.sigma > 0.0))
        throw std::invalid_argument("PatternSpec: component sigma must be > 0");
    }
    auto check_ratios = [&](const Vec& r) {
      if (r.size() != cls.components.size())
        throw std::invalid_argument("PatternSpec: ratio/component count mismatch");
      double sum = 0.0;
      for (double x : r) {
        if (x < 0.0) throw std::invalid_argument("PatternSpec: negative ratio");
        sum += x;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("PatternSpec: ratios must sum to 1");
    };
    check_ratios(cls.source_ratios);
    check_ratios(cls.target_ratios);
  }
  if (!spec.target_shift.empty() && spec.target_shift.size() != dim)
    throw std::invalid_argument("PatternSpec: shift dimension mismatch");
}
}  // namespace detail

inline std::pair<DomainDataset, DomainDataset> gen_biased_patterns(
    const PatternSpec& spec, std::size_t n_per_domain, std::uint64_t seed) {
  detail::validate_pattern(spec);
  if (n_per_domain < 2)
    throw std::invalid_argument("gen_biased_patterns: need at least 2 samples");
  const std::size_t dim = spec.classes.front().components.front().mean.size();
  const std::size_t M = spec.classes.size();

  auto gen_one = [&](Domain dom, std::uint64_t salt) {
    std::mt19937_64 rng(detail::mix_seed(seed, salt));
    std::uniform_int_distribution<std::size_t> pick_class(0, M - 1);
    std::normal_distribution<double> unit;

    DomainDataset ds;
    ds.domain = dom;
    ds.features = Mat(n_per_domain, dim);
    ds.labels.resize(n_per_domain);
    ds.subpatterns.resize(n_per_domain);
    ds.generator_spec = std::string("patterns/") + to_string(dom);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      const std::size_t y = pick_class(rng);
      const auto& cls = spec.classes[y];
      const Vec& ratios =
          dom == Domain::source ? cls.source_ratios : cls.target_ratios;
      std::discrete_distribution<std::size_t> pick_comp(ratios.begin(), ratios.end());
      const std::size_t comp = pick_comp(rng);
      const auto& component = cls.components[comp];
      for (std::size_t c = 0; c < dim; ++c) {
        double x = component.mean[c] + component.sigma * unit(rng);
        if (dom == Domain::target && !spec.target_shift.empty())
          x += spec.target_shift[c];
        ds.features(i, c) = x;
      }
      ds.labels[i] = static_cast<int>(y);
      ds.subpatterns[i] = static_cast<int>(comp);
    }
    return ds;
  };

  return {gen_one(Domain::source, 11), gen_one(Domain::target, 12)};
}

/// Shift and scale target features so their mean and per-dimension standard
/// deviation match the source's. This is the distortion-prone baseline that
/// aligns the sampled moments regardless of sampling bias.
struct MomentMatchResult {
  Mat features;
  Vec scale;          // per-dim sigma_s / sigma_t (1.0 where clamped)
  Vec mean_offset;    // per-dim mean(transformed - original) = mean_s - mean_t
  std::vector<std::size_t> clamped_dims;  // target dims with zero variance
};

inline MomentMatchResult moment_match_baseline(const DomainDataset& source,
                                               const DomainDataset& target) {
  if (source.size() == 0 || target.size() == 0)
    throw std::invalid_argument("moment_match_baseline: empty dataset");
  if (source.dim() != target.dim())
    throw std::invalid_argument("moment_match_baseline: dimension mismatch");
  const std::size_t d = source.dim();

  auto column_stats = [](const Mat& m, Vec& mean, Vec& stddev) {
    mean.assign(m.cols, 0.0);
    stddev.assign(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t c = 0; c < m.cols; ++c) mean[c] += m(i, c);
    for (double& v : mean) v /= static_cast<double>(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t c = 0; c < m.cols; ++c) {
        const double diff = m(i, c) - mean[c];
        stddev[c] += diff * diff;
      }
    for (double& v : stddev) v = std::sqrt(v / static_cast<double>(m.rows));
  };

  Vec mean_s, sd_s, mean_t, sd_t;
  column_stats(source.features, mean_s, sd_s);
  column_stats(target.features, mean_t, sd_t);

  MomentMatchResult r;
  r.scale.assign(d, 1.0);
  r.mean_offset.assign(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    if (sd_t[c] == 0.0) {
      r.clamped_dims.push_back(c);
      r.scale[c] = 1.0;
    } else {
      r.scale[c] = sd_s[c] / sd_t[c];
    }
    r.mean_offset[c] = mean_s[c] - mean_t[c];
  }
  r.features = Mat(target.size(), d);
  for (std::size_t i = 0; i < target.size(); ++i)
    for (std::size_t c = 0; c < d; ++c)
      r.features(i, c) = (target.features(i, c) - mean_t[c]) * r.scale[c] + mean_s[c];
  return r;
}

}  // namespace mira
