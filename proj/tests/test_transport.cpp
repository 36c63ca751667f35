// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "test_helpers.hpp"
#include "treeloss/transport.hpp"

using namespace treeloss;
using namespace treeloss::testing;

TEST_SUITE("transport") {

TEST_CASE("simplex validation renormalizes drift and rejects junk") {
  const auto ok = as_simplex(std::vector<double>{0.5 + 4e-7, 0.5});
  CHECK(ok[0] + ok[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(as_simplex(std::vector<double>{0.7, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(as_simplex(std::vector<double>{1.5, -0.5}), std::invalid_argument);

  CHECK(one_hot_index(std::vector<double>{0.0, 1.0, 0.0}) == 1);
  CHECK_THROWS_AS(one_hot_index(std::vector<double>{0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(one_hot_index(std::vector<double>{0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("lp solves hand-checked instances") {
  const auto tree = two_leaf_tree().with_weights(WeightScheme::Equal);
  const auto m = tree.ground_distance();

  SUBCASE("identical marginals cost nothing") {
    const std::vector<double> p{0.3, 0.7};
    CHECK(wasserstein_lp(p, p, m).cost == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("full move across the two-leaf tree costs the path length") {
    const auto res = wasserstein_lp(one_hot(2, 0), one_hot(2, 1), m, true);
    CHECK(res.cost == doctest::Approx(2.0));
    REQUIRE(res.plan.has_value());
    CHECK(res.plan->at(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(wasserstein_lp(one_hot(3, 0), one_hot(3, 1), m), std::invalid_argument);
  }
}

TEST_CASE("lp returns a feasible plan whose cost matches the optimum") {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const auto tree = random_tree(rng, 2, 10);
    const auto m = tree.ground_distance();
    const int c = tree.leaf_count();
    const auto p = random_simplex(rng, c);
    const auto q = random_simplex(rng, c);
    const auto res = wasserstein_lp(p, q, m, true);
    REQUIRE(res.plan.has_value());
    double cost = 0.0;
    for (int i = 0; i < c; ++i) {
      double row = 0.0, col = 0.0;
      for (int j = 0; j < c; ++j) {
        CHECK(res.plan->at(i, j) >= -1e-12);
        row += res.plan->at(i, j);
        col += res.plan->at(j, i);
        cost += res.plan->at(i, j) * m.at(i, j);
      }
      CHECK(std::abs(row - p[i]) <= 1e-8);
      CHECK(std::abs(col - q[i]) <= 1e-8);
    }
    CHECK(std::abs(cost - res.cost) <= 1e-8);
    CHECK(res.cost >= -1e-12);
  }
}

TEST_CASE("wasserstein is symmetric and vanishes only at p = q for metric M") {
  Rng rng(55);
  for (int trial = 0; trial < 40; ++trial) {
    const auto tree = random_tree(rng, 2, 8);
    // strictly positive weights so M is a genuine metric
    std::map<int, double> custom;
    for (int lv : tree.edge_levels()) custom[lv] = 0.5 + rng.uniform();
    const auto wt = tree.with_weights(WeightScheme::Custom, custom);
    const auto m = wt.ground_distance();
    const int c = wt.leaf_count();
    const auto p = random_simplex(rng, c);
    const auto q = random_simplex(rng, c);
    const double pq = wasserstein_lp(p, q, m).cost;
    const double qp = wasserstein_lp(q, p, m).cost;
    CHECK(std::abs(pq - qp) <= 1e-9 * (1.0 + pq));
    CHECK(wasserstein_lp(p, p, m).cost <= 1e-12);
    if (pq <= 1e-12)
      for (int i = 0; i < c; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-6));
  }
}

TEST_CASE("crisp closed form equals the lp on one-hot targets") {
  SUBCASE("hand-checked three-leaf value") {
    const auto tree = three_leaf_tree().with_weights(WeightScheme::Equal);
    const auto m = tree.ground_distance();
    const std::vector<double> p{0.5, 0.5, 0.0};
    CHECK(wasserstein_crisp(p, 1, m) == doctest::Approx(1.5));
    CHECK(wasserstein_lp(p, one_hot(3, 1), m).cost == doctest::Approx(1.5));
    CHECK(wasserstein_crisp(one_hot(3, 1), 1, m) == 0.0);
    CHECK_THROWS_AS(wasserstein_crisp(p, std::vector<double>{0.5, 0.5, 0.0}, m),
                    std::invalid_argument);
  }
  SUBCASE("random sweep stays within 1e-9") {
    Rng rng(202);
    for (int trial = 0; trial < 200; ++trial) {
      const auto tree = random_tree(rng, 2, 12);
      const auto m = tree.ground_distance();
      const int c = tree.leaf_count();
      const auto p = random_simplex(rng, c);
      const int hot = rng.uniform_int(0, c - 1);
      const double crisp = wasserstein_crisp(p, hot, m);
      const double lp = wasserstein_lp(p, one_hot(c, hot), m).cost;
      CHECK(std::abs(crisp - lp) <= 1e-9);
    }
  }
}

TEST_CASE("tree closed form equals the lp for arbitrary marginals") {
  const auto tree = three_leaf_tree().with_weights(WeightScheme::Equal);
  CHECK(wasserstein_tree(one_hot(3, 0), one_hot(3, 1), tree) == doctest::Approx(3.0));
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(wasserstein_tree(p, p, tree) == 0.0);
  CHECK_THROWS_AS(wasserstein_tree(p, one_hot(2, 0), tree), std::invalid_argument);

  Rng rng(303);
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = random_tree(rng, 2, 12);
    const int c = t.leaf_count();
    const auto a = random_simplex(rng, c);
    const auto b = random_simplex(rng, c);
    const double fast = wasserstein_tree(a, b, t);
    const double lp = wasserstein_lp(a, b, t.ground_distance()).cost;
    CHECK(std::abs(fast - lp) <= 1e-8);
  }
}

TEST_CASE("scaling every edge weight scales the transport cost") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_tree(rng, 2, 10);
    const double s = rng.uniform(0.1, 5.0);
    std::map<int, double> unscaled, scaled;
    for (int lv : t.edge_levels()) {
      const double w = rng.uniform(0.0, 2.0);
      unscaled[lv] = w;
      scaled[lv] = s * w;
    }
    const auto t1 = t.with_weights(WeightScheme::Custom, unscaled);
    const auto t2 = t.with_weights(WeightScheme::Custom, scaled);
    const int c = t.leaf_count();
    const auto p = random_simplex(rng, c);
    const auto q = random_simplex(rng, c);
    CHECK(wasserstein_tree(p, q, t2) ==
          doctest::Approx(s * wasserstein_tree(p, q, t1)).epsilon(1e-12));
    CHECK(wasserstein_lp(p, q, t2.ground_distance()).cost ==
          doctest::Approx(s * wasserstein_lp(p, q, t1.ground_distance()).cost).epsilon(1e-9));
  }
}

TEST_CASE("crisp gradient is the distance column and matches finite differences") {
  const auto tree = two_leaf_tree().with_weights(WeightScheme::Equal);
  const auto m = tree.ground_distance();
  const auto col = wasserstein_crisp_gradient(0, m);
  CHECK(col == std::vector<double>{0.0, 2.0});

  DistanceMatrix zero;
  zero.leaves = 3;
  zero.d.assign(9, 0.0);
  for (double g : wasserstein_crisp_gradient(1, zero)) CHECK(g == 0.0);

  Rng rng(505);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_tree(rng, 2, 8);
    const auto dist = t.ground_distance();
    const int c = t.leaf_count();
    const int hot = rng.uniform_int(0, c - 1);
    auto p = random_simplex(rng, c);
    const auto grad = wasserstein_crisp_gradient(hot, dist);
    // W(p, g) is linear in p; differentiate without the simplex constraint by
    // evaluating the raw dot product.
    const auto fd = fd_gradient(
        [&](std::span<const double> x) {
          double acc = 0.0;
          for (int l = 0; l < c; ++l) acc += x[l] * dist.at(l, hot);
          return acc;
        },
        p);
    CHECK(rel_err(grad, fd) <= 1e-7);
  }
}

}  // TEST_SUITE
