#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "mcep/partition.hpp"
#include "helpers.hpp"

using namespace mcep;
using Catch::Approx;

TEST_CASE("log rising factorial") {
  CHECK(log_rising_factorial(1.0, 3) == Approx(std::log(6.0)).margin(1e-14));
  CHECK(log_rising_factorial(2.5, 0) == 0.0);
  CHECK(log_rising_factorial(0.5, 2) == Approx(std::log(0.75)).margin(1e-14));
  CHECK_THROWS_AS(log_rising_factorial(0.0, 2), std::domain_error);
  CHECK_THROWS_AS(log_rising_factorial(-1.0, 2), std::domain_error);
}

TEST_CASE("log falling factorial") {
  CHECK(log_falling_factorial(3.0, 2) == Approx(std::log(6.0)).margin(1e-14));
  CHECK(log_falling_factorial(5.0, 0) == 0.0);
  CHECK(log_falling_factorial(4.0, 4) == Approx(std::log(24.0)).margin(1e-14));
  CHECK_THROWS_AS(log_falling_factorial(2.0, 3), std::domain_error);
}

TEST_CASE("partition prior probabilities at dj=kj=2, alpha=1") {
  Partition merged{{{0, 1}}};
  Partition split{{{0}, {1}}};
  // Oracle: enumerate the 4 label vectors and pool the ones inducing each
  // partition.
  std::map<int, double> mass;  // key: number of blocks
  testutil::for_each_z_vector(2, 2, [&](const std::vector<int>& z) {
    mass[k_tilde_from_z(z)] += testutil::z_vector_prior_mass(z, 2, 1.0);
  });
  CHECK(mass[1] == Approx(2.0 / 3.0).margin(1e-12));
  CHECK(mass[2] == Approx(1.0 / 3.0).margin(1e-12));
  CHECK(partition_prior_prob(merged, 2, 1.0) == Approx(2.0 / 3.0).margin(1e-12));
  CHECK(partition_prior_prob(split, 2, 1.0) == Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("partition prior equals z-vector enumeration for dj up to 4") {
  for (int d = 2; d <= 4; ++d) {
    for (double alpha : {0.35, 1.0, 3.0}) {
      // Pool exact prior mass of label vectors by induced partition.
      std::map<std::vector<std::vector<int>>, double> pooled;
      testutil::for_each_z_vector(d, d, [&](const std::vector<int>& z) {
        const Partition part = partition_from_z(z, d);
        pooled[part.blocks] += testutil::z_vector_prior_mass(z, d, alpha);
      });
      testutil::for_each_set_partition(d, [&](const Partition& part) {
        REQUIRE(pooled.count(part.blocks) == 1);
        CHECK(partition_prior_prob(part, d, alpha) == Approx(pooled[part.blocks]).margin(1e-12));
      });
    }
  }
}

TEST_CASE("partition prior sums to one over all set partitions") {
  for (int d = 2; d <= 5; ++d) {
    for (double alpha : {0.1, 0.36157, 1.0, 10.0}) {
      double total = 0.0;
      testutil::for_each_set_partition(d, [&](const Partition& part) {
        total += partition_prior_prob(part, d, alpha);
      });
      CHECK(total == Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("more blocks than the budget gets zero prior mass") {
  Partition split{{{0}, {1}, {2}}};
  CHECK(partition_prior_prob(split, 2, 1.0) == 0.0);
}

TEST_CASE("null model prior probability") {
  // 27 label vectors for dj = kj = 3.
  double merged_mass = 0.0;
  testutil::for_each_z_vector(3, 3, [&](const std::vector<int>& z) {
    if (k_tilde_from_z(z) == 1) merged_mass += testutil::z_vector_prior_mass(z, 3, 1.0);
  });
  CHECK(merged_mass == Approx(0.3).margin(1e-12));
  CHECK(null_prior_prob(3, 3, 1.0) == Approx(0.3).margin(1e-12));
  CHECK(null_prior_prob(2, 2, 1.0) == Approx(2.0 / 3.0).margin(1e-12));
  CHECK(null_prior_prob(1, 1, 7.5) == Approx(1.0).margin(1e-14));

  SECTION("single-block partition probability matches the null formula") {
    for (int d = 2; d <= 5; ++d) {
      Partition merged;
      merged.blocks.emplace_back();
      for (int i = 0; i < d; ++i) merged.blocks[0].push_back(i);
      for (double alpha : {0.2, 1.0, 4.0})
        CHECK(partition_prior_prob(merged, d, alpha) == Approx(null_prior_prob(d, d, alpha)).margin(1e-14));
    }
  }
}

TEST_CASE("null prior probability decreases in alpha") {
  for (int d = 2; d <= 5; ++d) {
    double prev = 2.0;
    for (double alpha : {1e-4, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4}) {
      const double cur = null_prior_prob(d, d, alpha);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("alpha calibration") {
  SECTION("dj=3 target 1/2 hits the quadratic root") {
    const AlphaCalibration cal = calibrate_alpha(3, 3, 0.5);
    // Root of 3.5 a^2 + 1.5 a - 1 = 0.
    const double root = (-1.5 + std::sqrt(1.5 * 1.5 + 4.0 * 3.5)) / (2.0 * 3.5);
    CHECK(cal.alpha == Approx(root).margin(1e-7));
    CHECK(cal.alpha == Approx(0.36157).margin(1e-4));
    CHECK(cal.achieved == Approx(0.5).margin(1e-9));
    CHECK_FALSE(cal.saturated);
  }
  SECTION("dj=3 target 0.3 recovers alpha = 1") {
    const AlphaCalibration cal = calibrate_alpha(3, 3, 0.3);
    CHECK(cal.alpha == Approx(1.0).margin(1e-6));
    CHECK(cal.achieved == Approx(0.3).margin(1e-9));
  }
  SECTION("dj=2 target 1/2 saturates at the upper bound") {
    const AlphaCalibration cal = calibrate_alpha(2, 2, 0.5);
    CHECK(cal.alpha == 1e6);
    CHECK(cal.saturated);
    CHECK(cal.achieved > 0.5);
    CHECK(cal.achieved < 0.5 + 1e-5);
  }
}

TEST_CASE("partition from labels") {
  // Label values are arbitrary; only the grouping matters.
  std::vector<int> z1{0, 0, 0, 2};  // four levels, budget 3
  std::vector<int> z2{1, 1, 1, 0};
  Partition expect{{{0, 1, 2}, {3}}};
  CHECK(partition_from_z(z1, 3) == expect);
  CHECK(partition_from_z(z2, 3) == expect);

  std::vector<int> z3{0, 1, 2};
  Partition singletons{{{0}, {1}, {2}}};
  CHECK(partition_from_z(z3, 3) == singletons);

  SECTION("invariant under label permutation") {
    Rng rng(7);
    for (int rep = 0; rep < 200; ++rep) {
      const int d = rng.uniform_int(2, 6);
      const int k = rng.uniform_int(2, 6);
      std::vector<int> z(d);
      for (auto& v : z) v = rng.uniform_int(0, k - 1);
      std::vector<int> perm(k);
      for (int i = 0; i < k; ++i) perm[i] = i;
      for (int i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      std::vector<int> zp(d);
      for (int i = 0; i < d; ++i) zp[i] = perm[z[i]];
      CHECK(partition_from_z(z, k) == partition_from_z(zp, k));
      CHECK(k_tilde_from_z(z) == partition_from_z(z, k).n_blocks());
    }
  }
}
