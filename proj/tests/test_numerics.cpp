#include <catch2/catch_amalgamated.hpp>

#include "mira/numerics.hpp"
#include "test_oracles.hpp"

using namespace mira;
using Catch::Approx;

TEST_CASE("softmax basics") {
  const Vec two = softmax(Vec{0.0, 0.0});
  CHECK(two[0] == Approx(0.5).margin(1e-15));
  CHECK(two[1] == Approx(0.5).margin(1e-15));

  // e^0 / (e^0 + e^-1), evaluated independently at high precision
  const Vec skew = softmax(Vec{0.0, -1.0});
  CHECK(skew[0] == Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(skew[1] == Approx(0.2689414213699951).epsilon(1e-12));

  for (double c : {-7.5, 0.0, 123.0}) {
    const Vec thirds = softmax(Vec{c, c, c});
    for (double v : thirds) CHECK(v == Approx(1.0 / 3.0).margin(1e-15));
  }

  CHECK_THROWS_AS(softmax(Vec{}), std::invalid_argument);
}

TEST_CASE("softmax stability and shift invariance") {
  std::mt19937_64 rng(42);
  for (int it = 0; it < 200; ++it) {
    std::uniform_int_distribution<std::size_t> len(1, 12);
    const Vec x = oracle::random_vec(rng, len(rng), -1e4, 1e4);
    const Vec s = softmax(x);
    double sum = 0.0;
    for (double v : s) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == Approx(1.0).margin(1e-9));

    std::uniform_real_distribution<double> cdist(-50.0, 50.0);
    const double c = cdist(rng);
    Vec shifted = x;
    for (double& v : shifted) v += c;
    const Vec s2 = softmax(shifted);
    for (std::size_t i = 0; i < s.size(); ++i)
      CHECK(std::abs(s[i] - s2[i]) < 1e-12);

    const Vec ref = oracle::softmax_ref(x);
    for (std::size_t i = 0; i < s.size(); ++i)
      CHECK(std::abs(s[i] - ref[i]) < 1e-10);
  }
}

TEST_CASE("kl divergence examples") {
  CHECK(kl_divergence(Vec{0.3, 0.7}, Vec{0.3, 0.7}) == 0.0);
  // 0.5 ln 2 + 0.5 ln(2/3)
  CHECK(kl_divergence(Vec{0.5, 0.5}, Vec{0.25, 0.75}) ==
        Approx(0.14384103622589045).epsilon(1e-12));
  // ln 2
  CHECK(kl_divergence(Vec{1.0, 0.0}, Vec{0.5, 0.5}) ==
        Approx(0.6931471805599453).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence(Vec{1.0}, Vec{0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("kl divergence nonnegativity and identity of indiscernibles") {
  std::mt19937_64 rng(7);
  for (int it = 0; it < 500; ++it) {
    std::uniform_int_distribution<std::size_t> len(2, 8);
    const std::size_t n = len(rng);
    const Vec p = oracle::random_prob_vec(rng, n);
    const Vec q = oracle::random_prob_vec(rng, n);
    const double kl = kl_divergence(p, q);
    CHECK(kl >= -1e-9);
    CHECK(std::abs(kl - oracle::kl_ref(p, q)) < 1e-10);

    CHECK(std::abs(kl_divergence(p, p)) < 1e-12);
    bool equal = true;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(p[i] - q[i]) > 1e-9) equal = false;
    if (std::abs(kl) < 1e-12) CHECK(equal);
  }
}

TEST_CASE("top_k_smallest examples and tie-breaks") {
  CHECK(top_k_smallest(Vec{5, 1, 3, 2}, 2) == std::vector<std::size_t>{1, 3});
  CHECK(top_k_smallest(Vec{2, 2, 2}, 2) == std::vector<std::size_t>{0, 1});
  CHECK(top_k_smallest(Vec{4, 7}, 5) == std::vector<std::size_t>{0, 1});  // clamp
  CHECK_THROWS_AS(top_k_smallest(Vec{1, 2}, 0), std::invalid_argument);
  CHECK_THROWS_AS(top_k_smallest(Vec{}, 1), std::invalid_argument);
}

TEST_CASE("top_k_smallest agrees with the sort oracle") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 1000; ++it) {
    std::uniform_int_distribution<std::size_t> len(1, 200);
    const std::size_t n = len(rng);
    std::uniform_int_distribution<std::size_t> kd(1, n);
    // Coarse values force plenty of ties.
    std::uniform_int_distribution<int> coarse(0, 9);
    Vec values(n);
    for (double& v : values) v = coarse(rng);
    const std::size_t k = kd(rng);
    CHECK(top_k_smallest(values, k) == oracle::top_k_sort_ref(values, k));
  }
}

TEST_CASE("distances") {
  const Vec a{0.0, 0.0}, b{3.0, 4.0};
  CHECK(euclidean_distance(a, a) == 0.0);
  CHECK(euclidean_distance(a, b) == Approx(5.0).epsilon(1e-15));
  CHECK(gaussian_kernel_distance(a, a) == 0.0);
  CHECK(gaussian_kernel_distance(Vec{0.0}, Vec{1.0}, 1.0) ==
        Approx(0.3934693402873666).epsilon(1e-12));
  CHECK_THROWS_AS(euclidean_distance(Vec{1.0}, Vec{1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel_distance(a, b, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel_distance(a, b, -1.0), std::invalid_argument);
}

TEST_CASE("distance symmetry is exact and matches the oracle") {
  std::mt19937_64 rng(13);
  for (int it = 0; it < 300; ++it) {
    std::uniform_int_distribution<std::size_t> len(1, 16);
    const std::size_t d = len(rng);
    const Vec a = oracle::random_vec(rng, d, -10.0, 10.0);
    const Vec b = oracle::random_vec(rng, d, -10.0, 10.0);
    CHECK(euclidean_distance(a, b) == euclidean_distance(b, a));
    CHECK(gaussian_kernel_distance(a, b, 1.5) == gaussian_kernel_distance(b, a, 1.5));
    CHECK(std::abs(euclidean_distance(a, b) - oracle::euclidean_ref(a, b)) < 1e-12);
  }
}

TEST_CASE("gaussian distance orders points exactly like the euclidean one") {
  std::mt19937_64 rng(17);
  for (int it = 0; it < 100; ++it) {
    const Mat pool = oracle::random_mat(rng, 20, 3, 0.0, 2.0);
    const Vec q = oracle::random_vec(rng, 3, 0.0, 2.0);
    Vec de(pool.rows), dg(pool.rows);
    for (std::size_t i = 0; i < pool.rows; ++i) {
      de[i] = euclidean_distance(q, pool.row(i));
      dg[i] = gaussian_kernel_distance(q, pool.row(i), 1.0);
    }
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{20}})
      CHECK(top_k_smallest(de, k) == top_k_smallest(dg, k));
  }
}
