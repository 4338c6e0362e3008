#include <catch2/catch_amalgamated.hpp>

#include "mira/mirror.hpp"
#include "test_oracles.hpp"

using namespace mira;
using Catch::Approx;

namespace {

Mat pool3() {
  return Mat::from_rows({{0.0, 0.0}, {2.0, 0.0}, {9.0, 9.0}});
}

}  // namespace

TEST_CASE("build_mirror_set basics") {
  const Vec query{1.0, 0.0};
  const MirrorSet set = build_mirror_set(query, pool3(), 2, DistanceKind::euclidean(),
                                         WeightKind::uniform);
  CHECK(set.neighbor_indices == std::vector<std::size_t>{0, 1});
  CHECK(set.weights[0] == Approx(0.5).margin(1e-15));
  CHECK(set.weights[1] == Approx(0.5).margin(1e-15));

  const MirrorSet one = build_mirror_set(query, pool3(), 1, DistanceKind::euclidean(),
                                         WeightKind::uniform);
  CHECK(one.k() == 1);
  CHECK(one.weights == Vec{1.0});

  CHECK_THROWS_AS(build_mirror_set(query, Mat(), 1, DistanceKind::euclidean(),
                                   WeightKind::uniform),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_mirror_set(Vec{1.0}, pool3(), 1, DistanceKind::euclidean(),
                                   WeightKind::uniform),
                  std::invalid_argument);
}

TEST_CASE("neighbor selection matches the brute-force oracle") {
  std::mt19937_64 rng(23);
  for (int it = 0; it < 300; ++it) {
    std::uniform_int_distribution<std::size_t> nd(1, 100), dd(1, 8);
    const std::size_t n = nd(rng), d = dd(rng);
    std::uniform_int_distribution<std::size_t> kd(1, n);
    const Mat pool = oracle::random_mat(rng, n, d, 0.0, 2.0);
    const Vec q = oracle::random_vec(rng, d, 0.0, 2.0);
    const std::size_t k = kd(rng);

    Vec dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = euclidean_distance(q, pool.row(i));
    const auto expected = oracle::top_k_sort_ref(dist, k);

    const MirrorSet set =
        build_mirror_set(q, pool, k, DistanceKind::euclidean(), WeightKind::uniform);
    CHECK(set.neighbor_indices == expected);

    // Monotone transform of the distance: same neighbors.
    const MirrorSet gauss = build_mirror_set(q, pool, k, DistanceKind::gaussian(1.0),
                                             WeightKind::uniform);
    CHECK(gauss.neighbor_indices == expected);
  }
}

TEST_CASE("inverse-distance weights are a softmax over negated distances") {
  const Mat pool = Mat::from_rows({{0.0}, {1.0}, {10.0}});
  const MirrorSet set = build_mirror_set(Vec{0.0}, pool, 2, DistanceKind::euclidean(),
                                         WeightKind::inverse_distance);
  CHECK(set.neighbor_indices == std::vector<std::size_t>{0, 1});
  // softmax(-0, -1)
  CHECK(set.weights[0] == Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(set.weights[1] == Approx(0.2689414213699951).epsilon(1e-12));
  double sum = 0.0;
  for (double w : set.weights) {
    CHECK(w >= 0.0);
    sum += w;
  }
  CHECK(sum == Approx(1.0).margin(1e-9));
}

TEST_CASE("estimate_mirror is the convex combination of its neighbors") {
  const Mat pool = Mat::from_rows({{0.0, 0.0}, {2.0, 0.0}});
  MirrorSet set;
  set.neighbor_indices = {0, 1};
  set.weights = {0.5, 0.5};
  const MirrorSample m = estimate_mirror(set, pool);
  CHECK(m.vector[0] == Approx(1.0).margin(1e-15));
  CHECK(m.vector[1] == Approx(0.0).margin(1e-15));

  MirrorSet single;
  single.neighbor_indices = {1};
  single.weights = {1.0};
  CHECK(estimate_mirror(single, pool).vector == Vec{2.0, 0.0});

  const Mat same = Mat::from_rows({{3.0, -1.0}, {3.0, -1.0}, {3.0, -1.0}});
  MirrorSet any;
  any.neighbor_indices = {0, 1, 2};
  any.weights = {0.2, 0.5, 0.3};
  const MirrorSample c = estimate_mirror(any, same);
  CHECK(c.vector[0] == Approx(3.0).margin(1e-12));
  CHECK(c.vector[1] == Approx(-1.0).margin(1e-12));

  MirrorSet bad;
  bad.neighbor_indices = {7};
  bad.weights = {1.0};
  CHECK_THROWS_AS(estimate_mirror(bad, pool), std::logic_error);
}

TEST_CASE("batch_mirrors composes per-query results") {
  std::mt19937_64 rng(31);
  const Mat queries = oracle::random_mat(rng, 7, 3);
  const Mat pool = oracle::random_mat(rng, 11, 3);
  MirrorConfig cfg;
  cfg.k = 3;
  const auto batch = batch_mirrors(queries, pool, cfg);
  REQUIRE(batch.size() == queries.rows);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    const MirrorSet set = build_mirror_set(queries.row(q), pool, cfg.k, cfg.distance,
                                           cfg.weighting, q);
    const MirrorSample m = estimate_mirror(set, pool);
    CHECK(batch[q].provenance.neighbor_indices == set.neighbor_indices);
    CHECK(batch[q].vector == m.vector);  // identical code path, bit-for-bit
    CHECK(batch[q].provenance.query_index == q);
  }
}

TEST_CASE("self pool with k=1 mirrors every query onto itself") {
  std::mt19937_64 rng(37);
  const Mat pts = oracle::random_mat(rng, 9, 4);
  MirrorConfig cfg;
  cfg.k = 1;
  const auto mirrors = batch_mirrors(pts, pts, cfg);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    CHECK(mirrors[i].provenance.neighbor_indices == std::vector<std::size_t>{i});
    for (std::size_t c = 0; c < pts.cols; ++c)
      CHECK(mirrors[i].vector[c] == pts(i, c));
  }
}

TEST_CASE("mirror lies in the neighbor bounding box; uniform equals the mean") {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 100; ++it) {
    const Mat pool = oracle::random_mat(rng, 12, 3);
    const Vec q = oracle::random_vec(rng, 3);
    for (WeightKind wk : {WeightKind::uniform, WeightKind::inverse_distance}) {
      const MirrorSet set =
          build_mirror_set(q, pool, 4, DistanceKind::euclidean(), wk);
      const MirrorSample m = estimate_mirror(set, pool);
      for (std::size_t c = 0; c < 3; ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t idx : set.neighbor_indices) {
          lo = std::min(lo, pool(idx, c));
          hi = std::max(hi, pool(idx, c));
        }
        CHECK(m.vector[c] >= lo - 1e-12);
        CHECK(m.vector[c] <= hi + 1e-12);
      }
      if (wk == WeightKind::uniform) {
        for (std::size_t c = 0; c < 3; ++c) {
          double mean = 0.0;
          for (std::size_t idx : set.neighbor_indices) mean += pool(idx, c);
          mean /= static_cast<double>(set.k());
          CHECK(std::abs(m.vector[c] - mean) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("pool row permutation relabels indices but keeps mirror vectors") {
  std::mt19937_64 rng(43);
  const Mat queries = oracle::random_mat(rng, 5, 2);
  const Mat pool = oracle::random_mat(rng, 20, 2);

  std::vector<std::size_t> perm(pool.rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat shuffled(pool.rows, pool.cols);
  for (std::size_t i = 0; i < pool.rows; ++i) shuffled.set_row(i, pool.row(perm[i]));

  MirrorConfig cfg;
  cfg.k = 3;
  const auto a = batch_mirrors(queries, pool, cfg);
  const auto b = batch_mirrors(queries, shuffled, cfg);
  for (std::size_t qi = 0; qi < queries.rows; ++qi)
    for (std::size_t c = 0; c < queries.cols; ++c)
      CHECK(std::abs(a[qi].vector[c] - b[qi].vector[c]) < 1e-12);
}
