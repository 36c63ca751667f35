// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "treeloss/datagen.hpp"
#include "treeloss/losses.hpp"

using namespace treeloss;
using namespace treeloss::testing;

namespace {

std::vector<double> random_logits(Rng& rng, int c, double scale = 3.0) {
  std::vector<double> z(c);
  for (double& x : z) x = rng.uniform(-scale, scale);
  return z;
}

LossConfig make_cfg(LossKind kind, WeightScheme scheme, double alpha = 0.5, double beta = 0.5) {
  LossConfig cfg;
  cfg.kind = kind;
  cfg.scheme = scheme;
  cfg.alpha = alpha;
  cfg.beta = beta;
  return cfg;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("softmax: symmetry, saturation, high-precision reference") {
  const auto uniform = softmax(std::vector<double>{0.0, 0.0, 0.0});
  for (double x : uniform) CHECK(x == doctest::Approx(1.0 / 3));

  const auto sat = softmax(std::vector<double>{1000.0, 0.0, 0.0});
  CHECK(sat[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(sat[1]));

  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), std::invalid_argument);

  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto z = random_logits(rng, rng.uniform_int(2, 16), 30.0);
    const auto p = softmax(z);
    // long double reference with the same max-shift
    long double mx = z[0];
    for (double v : z) mx = std::max<long double>(mx, v);
    long double sum = 0.0L;
    std::vector<long double> e(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      e[i] = std::exp(static_cast<long double>(z[i]) - mx);
      sum += e[i];
    }
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(std::abs(p[i] - static_cast<double>(e[i] / sum)) <= 1e-12);
      total += p[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy basics and clamping") {
  CHECK(cross_entropy(std::vector<double>{0.0, 1.0}, 1) == 0.0);
  CHECK(cross_entropy(std::vector<double>{0.5, 0.25, 0.25}, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double clamped = cross_entropy(std::vector<double>{0.0, 1.0}, 0);
  CHECK(clamped == doctest::Approx(-std::log(1e-12)));
  CHECK(std::isfinite(clamped));
}

TEST_CASE("combined loss reduces to its parts") {
  const auto tree = three_leaf_tree().with_weights(WeightScheme::Equal);
  const auto m = tree.ground_distance();
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_simplex(rng, 3);
    const int hot = rng.uniform_int(0, 2);
    CHECK(wasserstein_ce(p, hot, m, 1.0, 0.0) == cross_entropy(p, hot));
    CHECK(wasserstein_ce(p, hot, m, 0.0, 1.0) == wasserstein_crisp(p, hot, m));
  }
  const std::vector<double> p{0.5, 0.5, 0.0};
  CHECK(wasserstein_ce(p, 1, m, 0.5, 0.5) == doctest::Approx(1.096574).epsilon(1e-6));
  CHECK_THROWS_AS(wasserstein_ce(p, 1, m, -0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(wasserstein_ce(p, 1, m, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("aggregation: subtree sums, path indicator, matrix-power equivalence") {
  // leaves {1,2} under P1, leaf {3} under P2
  std::vector<TreeNode> nodes{
      {0, "root", std::nullopt, std::nullopt}, {1, "l1", 4, 1.0}, {2, "l2", 4, 1.0},
      {3, "l3", 5, 1.0},                       {4, "P1", 0, 1.0}, {5, "P2", 0, 1.0},
  };
  const auto tree = LabelTree::from_nodes(nodes);
  const auto agg = aggregate(std::vector<double>{0.2, 0.3, 0.5}, tree);
  CHECK(agg[tree.index_of_id(4)] == doctest::Approx(0.5));
  CHECK(agg[tree.index_of_id(5)] == doctest::Approx(0.5));
  CHECK(agg[tree.root()] == doctest::Approx(1.0));

  // a one-hot leaf marks exactly its root path
  const auto ghot = aggregate(one_hot(3, 0), tree);
  for (int v = 0; v < tree.node_count(); ++v) {
    const bool on_path = v == tree.index_of_id(1) || v == tree.index_of_id(4) || v == tree.root();
    CHECK(ghot[v] == (on_path ? 1.0 : 0.0));
  }

  CHECK_THROWS_AS(aggregate(one_hot(4, 0), tree), std::invalid_argument);

  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = random_tree(rng, 2, 12);
    const auto p = random_simplex(rng, t.leaf_count());
    const auto fast = aggregate(p, t);
    const auto slow = aggregate_by_matrix_power(t, p);
    for (int v = 0; v < t.node_count(); ++v) CHECK(std::abs(fast[v] - slow[v]) <= 1e-12);
    CHECK(std::abs(fast[t.root()] - 1.0) <= 1e-9);
  }
}

TEST_CASE("tree ce: hand value, zero at the target, leaf-only reduction") {
  const auto tree = three_leaf_tree().with_weights(WeightScheme::Equal);
  CHECK(tree_ce(std::vector<double>{0.2, 0.5, 0.3}, 1, tree) ==
        doctest::Approx(0.916291).epsilon(1e-6));
  CHECK(tree_ce(one_hot(3, 1), 1, tree) == doctest::Approx(0.0).epsilon(1e-12));

  // LeafOnly weights collapse the sum to the leaf term
  Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = random_tree(rng, 2, 10).with_weights(WeightScheme::LeafOnly);
    const auto p = random_simplex(rng, t.leaf_count());
    const int hot = rng.uniform_int(0, t.leaf_count() - 1);
    CHECK(std::abs(tree_ce(p, hot, t) - cross_entropy(p, hot)) <= 1e-12);
  }

  std::vector<TreeNode> bare{
      {0, "root", std::nullopt, std::nullopt},
      {1, "x", 0, std::nullopt},
      {2, "y", 0, std::nullopt},
  };
  CHECK_THROWS_AS(tree_ce(std::vector<double>{0.5, 0.5}, 0, LabelTree::from_nodes(bare)),
                  std::logic_error);
}

TEST_CASE("loss values are nonnegative and vanish at the crisp target") {
  Rng rng(31);
  const auto tree = gen_tree({});  // balanced 4x3x2
  for (const auto scheme : {WeightScheme::LeafOnly, WeightScheme::TopOnly, WeightScheme::Equal,
                            WeightScheme::Hierarchical}) {
    for (const auto kind : {LossKind::CrossEntropy, LossKind::Wasserstein,
                            LossKind::WassersteinCE, LossKind::TreeCE}) {
      const auto cfg = make_cfg(kind, scheme);
      const auto ctx = LossContext::make(tree, cfg);
      for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_simplex(rng, tree.leaf_count());
        const int hot = rng.uniform_int(0, tree.leaf_count() - 1);
        CHECK(pixel_loss(p, hot, cfg, ctx) >= 0.0);
        CHECK(pixel_loss(one_hot(tree.leaf_count(), hot), hot, cfg, ctx) <=
              doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("analytic logit gradients match finite differences for every kind and scheme") {
  Rng rng(37);
  const auto tree = gen_tree({});
  const int c = tree.leaf_count();
  for (const auto scheme : {WeightScheme::LeafOnly, WeightScheme::TopOnly, WeightScheme::Equal,
                            WeightScheme::Hierarchical}) {
    for (const auto kind : {LossKind::CrossEntropy, LossKind::Wasserstein,
                            LossKind::WassersteinCE, LossKind::TreeCE}) {
      const auto cfg = make_cfg(kind, scheme);
      const auto ctx = LossContext::make(tree, cfg);
      for (int trial = 0; trial < 25; ++trial) {
        const auto z = random_logits(rng, c);
        const int hot = rng.uniform_int(0, c - 1);
        const auto grad = loss_gradient(z, hot, cfg, ctx);
        const auto fd = fd_gradient(
            [&](std::span<const double> logits) {
              return pixel_loss(softmax(logits), hot, cfg, ctx);
            },
            z);
        CHECK(rel_err(grad, fd) <= 1e-5);
      }
    }
  }
}

TEST_CASE("gradient edge cases") {
  const auto tree = three_leaf_tree();
  const auto cfg = make_cfg(LossKind::CrossEntropy, WeightScheme::Equal);
  const auto ctx = LossContext::make(tree, cfg);

  // CE at its minimum: p = g needs strongly peaked logits
  const std::vector<double> peaked{50.0, -50.0, -50.0};
  const auto grad = loss_gradient(peaked, 0, cfg, ctx);
  for (double g : grad) CHECK(std::abs(g) <= 1e-12);

  // WassersteinCE with alpha=1, beta=0 collapses onto the CE gradient
  const auto wce = make_cfg(LossKind::WassersteinCE, WeightScheme::Equal, 1.0, 0.0);
  const auto wctx = LossContext::make(tree, wce);
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_logits(rng, 3);
    const int hot = rng.uniform_int(0, 2);
    const auto a = loss_gradient(z, hot, wce, wctx);
    const auto b = loss_gradient(z, hot, cfg, ctx);
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
  }
}

TEST_CASE("batch loss: masking, averaging, empty batch") {
  const auto tree = three_leaf_tree();
  const auto cfg = make_cfg(LossKind::TreeCE, WeightScheme::Equal);
  const auto ctx = LossContext::make(tree, cfg);
  Rng rng(43);

  SUBCASE("all masked out yields zero") {
    PixelBatch batch;
    batch.size = 4;
    batch.classes = 3;
    batch.logits.assign(12, 0.5);
    batch.targets.assign(4, 0);
    batch.mask.assign(4, 0);
    const auto res = batch_loss(batch, cfg, ctx);
    CHECK(res.value == 0.0);
    CHECK(res.annotated == 0);
    for (double g : res.grad) CHECK(g == 0.0);
  }

  SUBCASE("single annotated pixel equals the per-pixel loss") {
    PixelBatch batch;
    batch.size = 3;
    batch.classes = 3;
    batch.logits = {1.0, 0.0, -1.0, 0.3, 0.3, 0.3, 2.0, -2.0, 0.0};
    batch.targets = {1, 0, 2};
    batch.mask = {0, 1, 0};
    const auto res = batch_loss(batch, cfg, ctx);
    const std::span<const double> z(batch.logits.data() + 3, 3);
    CHECK(res.value == doctest::Approx(pixel_loss(softmax(z), 0, cfg, ctx)).epsilon(1e-15));
    for (int i = 0; i < 3; ++i) {
      CHECK(res.grad[i] == 0.0);      // masked row
      CHECK(res.grad[6 + i] == 0.0);  // masked row
    }
  }

  SUBCASE("mixed batch equals the masked mean of single-pixel losses") {
    const int b = 16, c = 3;
    PixelBatch batch;
    batch.size = b;
    batch.classes = c;
    for (int i = 0; i < b; ++i) {
      const auto z = random_logits(rng, c);
      batch.logits.insert(batch.logits.end(), z.begin(), z.end());
      batch.targets.push_back(rng.uniform_int(0, c - 1));
      batch.mask.push_back(rng.uniform() < 0.6 ? 1 : 0);
    }
    const auto res = batch_loss(batch, cfg, ctx);
    double want = 0.0;
    int n = 0;
    for (int i = 0; i < b; ++i) {
      if (!batch.mask[i]) continue;
      const std::span<const double> z(batch.logits.data() + i * c, c);
      want += pixel_loss(softmax(z), batch.targets[i], cfg, ctx);
      ++n;
    }
    if (n > 0) want /= n;
    CHECK(res.value == doctest::Approx(want).epsilon(1e-12));
    CHECK(res.annotated == n);
  }
}

}  // TEST_SUITE
