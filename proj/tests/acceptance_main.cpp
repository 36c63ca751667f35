// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Each numbered criterion prints one [PASS]/[FAIL] line;
// the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "test_helpers.hpp"
#include "treeloss/datagen.hpp"
#include "treeloss/evaluation.hpp"
#include "treeloss/experiment.hpp"
#include "treeloss/io.hpp"
#include "treeloss/losses.hpp"
#include "treeloss/trainer.hpp"
#include "treeloss/transport.hpp"

using namespace treeloss;
using namespace treeloss::testing;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int number, std::string title)
      : number_(number), title_(std::move(title)), start_(std::chrono::steady_clock::now()) {}

  void expect(bool ok, const std::string& detail) {
    if (!ok && first_failure_.empty()) first_failure_ = detail;
    ok_ &= ok;
  }

  void finish(double runtime_limit_sec = 0.0) {
    const double sec =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                              start_)
            .count() /
        1000.0;
    if (runtime_limit_sec > 0.0 && sec > runtime_limit_sec)
      expect(false, "runtime " + std::to_string(sec) + "s exceeds limit " +
                        std::to_string(runtime_limit_sec) + "s");
    std::printf("[%s] criterion %2d (%6.1fs): %s%s%s\n", ok_ ? "PASS" : "FAIL", number_, sec,
                title_.c_str(), first_failure_.empty() ? "" : " -- ",
                first_failure_.c_str());
    std::fflush(stdout);
    if (!ok_) ++g_failures;
  }

 private:
  int number_;
  std::string title_;
  std::string first_failure_;
  bool ok_ = true;
  std::chrono::steady_clock::time_point start_;
};

void criterion1_crisp_vs_lp() {
  Criterion c(1, "crisp closed form equals the transport LP on one-hot targets (<=1e-9)");
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 220; ++trial) {
    const auto tree = random_tree(rng, 2, 12);
    const auto m = tree.ground_distance();
    const int leaves = tree.leaf_count();
    const auto p = random_simplex(rng, leaves);
    const int hot = rng.uniform_int(0, leaves - 1);
    const double crisp = wasserstein_crisp(p, hot, m);
    const double lp = wasserstein_lp(p, one_hot(leaves, hot), m).cost;
    worst = std::max(worst, std::abs(crisp - lp));
  }
  c.expect(worst <= 1e-9, "max |crisp - lp| = " + std::to_string(worst));
  c.finish(30.0);
}

void criterion2_tree_vs_lp() {
  Criterion c(2, "tree closed form equals the transport LP on general marginals (<=1e-8)");
  Rng rng(1002);
  double worst = 0.0;
  for (int trial = 0; trial < 520; ++trial) {
    const auto tree = random_tree(rng, 2, 12);
    const int leaves = tree.leaf_count();
    const auto p = random_simplex(rng, leaves);
    const auto q = random_simplex(rng, leaves);
    const double fast = wasserstein_tree(p, q, tree);
    const double lp = wasserstein_lp(p, q, tree.ground_distance()).cost;
    worst = std::max(worst, std::abs(fast - lp));
  }
  c.expect(worst <= 1e-8, "max |tree - lp| = " + std::to_string(worst));
  c.finish(60.0);
}

void criterion3_reductions() {
  Criterion c(3, "reduction identities: tce/leaf == ce, wce(1,0) == ce, wce(0,1) == W");
  Rng rng(1003);
  double worst_tce = 0.0;
  bool exact = true;
  for (int batch = 0; batch < 1000; ++batch) {
    const auto tree = random_tree(rng, 2, 10);
    const auto leaf_tree = tree.with_weights(WeightScheme::LeafOnly);
    const auto m = leaf_tree.ground_distance();
    const int leaves = tree.leaf_count();
    for (int i = 0; i < 4; ++i) {
      const auto p = random_simplex(rng, leaves);
      const int hot = rng.uniform_int(0, leaves - 1);
      worst_tce = std::max(worst_tce,
                           std::abs(tree_ce(p, hot, leaf_tree) - cross_entropy(p, hot)));
      exact &= wasserstein_ce(p, hot, m, 1.0, 0.0) == cross_entropy(p, hot);
      exact &= wasserstein_ce(p, hot, m, 0.0, 1.0) == wasserstein_crisp(p, hot, m);
    }
  }
  c.expect(worst_tce <= 1e-12, "max |tce(leaf) - ce| = " + std::to_string(worst_tce));
  c.expect(exact, "wce reductions are not exact");
  c.finish();
}

void criterion4_gradients() {
  Criterion c(4, "loss-through-softmax-through-mlp gradients vs finite differences (<=1e-5)");
  Rng rng(1004);
  GenSpec shape;
  shape.tops = 2;
  shape.mids = 2;
  shape.leaves = 2;
  const auto tree = gen_tree(shape);
  const int leaves = tree.leaf_count();
  const int bands = 5;
  double worst = 0.0;
  for (const auto kind : {LossKind::CrossEntropy, LossKind::Wasserstein,
                          LossKind::WassersteinCE, LossKind::TreeCE}) {
    for (const auto scheme : {WeightScheme::LeafOnly, WeightScheme::TopOnly,
                              WeightScheme::Equal, WeightScheme::Hierarchical}) {
      LossConfig cfg;
      cfg.kind = kind;
      cfg.scheme = scheme;
      const auto ctx = LossContext::make(tree, cfg);
      for (int instance = 0; instance < 100; ++instance) {
        auto model = Mlp::init(bands, {6}, leaves, rng);
        std::vector<double> x(bands);
        for (double& v : x) v = rng.uniform(0.0, 1.0);
        const int hot = rng.uniform_int(0, leaves - 1);

        Mlp::Workspace ws;
        const auto logits = model.forward(x, ws);
        const auto dlz = loss_gradient(logits, hot, cfg, ctx);
        auto grads = model.make_grads();
        model.backward(ws, dlz, grads);
        std::vector<double> flat;
        for (const auto& l : grads.layers) {
          flat.insert(flat.end(), l.w.begin(), l.w.end());
          flat.insert(flat.end(), l.b.begin(), l.b.end());
        }
        const auto fd = fd_gradient(
            [&](std::span<const double> params) {
              Mlp probe = model;
              probe.unflatten(params);
              Mlp::Workspace pws;
              const auto z = probe.forward(x, pws);
              return pixel_loss(softmax(z), hot, cfg, ctx);
            },
            model.flatten());
        worst = std::max(worst, rel_err(flat, fd));
      }
    }
  }
  c.expect(worst <= 1e-5, "max relative gradient error = " + std::to_string(worst));
  c.finish(120.0);
}

void criterion5_aggregation() {
  Criterion c(5, "aggregation matches matrix powers; unit root mass; exact nilpotency");
  Rng rng(1005);
  double worst = 0.0, worst_root = 0.0;
  bool nilpotent = true;
  for (int trial = 0; trial < 60; ++trial) {
    const auto tree = random_tree(rng, 2, 12);
    std::vector<double> z(tree.leaf_count());
    for (double& v : z) v = rng.uniform(-6.0, 6.0);
    const auto p = softmax(z);
    const auto fast = aggregate(p, tree);
    const auto slow = aggregate_by_matrix_power(tree, p);
    for (int v = 0; v < tree.node_count(); ++v)
      worst = std::max(worst, std::abs(fast[v] - slow[v]));
    worst_root = std::max(worst_root, std::abs(fast[tree.root()] - 1.0));

    const AdjacencyOperator adj(tree);
    std::vector<double> probe(tree.node_count());
    for (double& v : probe) v = rng.uniform(-3.0, 3.0);
    for (int k = 0; k <= tree.depth(); ++k) probe = adj.apply(probe);
    for (double v : probe) nilpotent &= v == 0.0;
  }
  c.expect(worst <= 1e-12, "max |matrix power - subtree sum| = " + std::to_string(worst));
  c.expect(worst_root <= 1e-9, "max |root mass - 1| = " + std::to_string(worst_root));
  c.expect(nilpotent, "A^(K+1) is not exactly zero");
  c.finish();
}

void criterion6_ood_rule() {
  Criterion c(6, "ood rule: tau=0 rejects nothing, monotone rejection, strict boundary");
  Rng rng(1006);
  PixelScores scores;
  scores.classes = 4;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> z(4);
    for (double& v : z) v = rng.uniform(-5.0, 5.0);
    const auto p = softmax(z);
    scores.scores.insert(scores.scores.end(), p.begin(), p.end());
    scores.truth.push_back(rng.uniform_int(1, 4));
    scores.image_id.push_back(0);
  }
  const auto at0 = predictions_at_tau(scores, 0.0);
  long flagged0 = 0;
  for (int p : at0) flagged0 += p == 0;
  c.expect(flagged0 == 0, "tau=0 flagged " + std::to_string(flagged0) + " pixels");

  long prev = -1;
  bool monotone = true;
  for (double tau : tau_grid(101)) {
    const auto pred = predictions_at_tau(scores, tau);
    long flagged = 0;
    for (int p : pred) flagged += p == 0;
    monotone &= flagged >= prev;
    prev = flagged;
  }
  c.expect(monotone, "rejection count decreased along the grid");

  c.expect(decide(std::vector<double>{0.6, 0.4}, 0.6) == 0, "max == tau must reject");
  c.expect(decide(std::vector<double>{0.6, 0.4}, 0.599999) == 1, "max > tau must accept");
  c.finish();
}

struct BenchmarkCache {
  // per seed: map cell name -> fold-mean macro F1 at tau_m
  std::vector<std::map<std::string, double>> f1;
  // per seed: cross-branch error mass at tau0, fold-averaged
  std::vector<std::map<std::string, double>> cross_mass;
};

BenchmarkCache run_desk_benchmark() {
  BenchmarkConfig cfg;
  cfg.gen = GenSpec{};  // 4x3x2 tree, 40 images, 64x64x16, 5 folds, 30% annotated
  cfg.train.lr = 1e-3;
  cfg.train.pixels_per_image = 64;
  cfg.train.epochs = 50;
  cfg.cells = {
      {LossKind::TreeCE, WeightScheme::LeafOnly},  // the CE baseline row
      {LossKind::TreeCE, WeightScheme::Equal},
      {LossKind::TreeCE, WeightScheme::TopOnly},
      {LossKind::TreeCE, WeightScheme::Hierarchical},
      {LossKind::WassersteinCE, WeightScheme::Hierarchical},
  };

  BenchmarkCache cache;
  for (const std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
    cfg.gen.seed = seed;
    cfg.train.seed = seed;
    const auto outcome = run_benchmark(cfg);
    std::map<std::string, double> f1, mass;
    for (const auto& cell : outcome.cells) {
      const std::string name =
          loss_name(cell.cell.kind) + ":" + scheme_name(cell.cell.scheme);
      for (const auto& fold : cell.folds)
        if (!fold.error.empty())
          throw std::runtime_error("cell " + name + " failed: " + fold.error);
      f1[name] = cell.summarize().f1m_mean;
      mass[name] =
          cross_class_error_mass(cell.mean_confusion(false), outcome.view.classes());
      std::printf("    seed %llu %-10s f1@taum=%.4f cross-branch@tau0=%.4f\n",
                  static_cast<unsigned long long>(seed), name.c_str(), f1[name], mass[name]);
      std::fflush(stdout);
    }
    cache.f1.push_back(std::move(f1));
    cache.cross_mass.push_back(std::move(mass));
  }
  return cache;
}

void criterion7_and_8(const BenchmarkCache& cache, double bench_seconds) {
  {
    Criterion c(7, "desk-scale ordering: wce/hier >= ce baseline (2 of 3 seeds); "
                   "tce/{equal,top,hier} >= tce/leaf on seed means");
    int wins = 0;
    for (const auto& f1 : cache.f1) wins += f1.at("wce:hier") >= f1.at("tce:leaf");
    c.expect(wins >= 2, "wce/hier beat the baseline in only " + std::to_string(wins) +
                            " of 3 seeds");

    auto seed_mean = [&](const std::string& name) {
      double acc = 0.0;
      for (const auto& f1 : cache.f1) acc += f1.at(name);
      return acc / static_cast<double>(cache.f1.size());
    };
    const double base = seed_mean("tce:leaf");
    for (const std::string name : {"tce:equal", "tce:top", "tce:hier"}) {
      const double mean = seed_mean(name);
      c.expect(mean >= base, name + " mean " + std::to_string(mean) + " < baseline " +
                                 std::to_string(base));
    }
    if (bench_seconds > 1800.0)
      c.expect(false, "benchmark took " + std::to_string(bench_seconds) + "s (> 30 min)");
    c.finish();
  }
  {
    Criterion c(8, "confusion trend: wce/hier has strictly less cross-branch error than ce");
    double wce = 0.0, ce = 0.0;
    for (const auto& mass : cache.cross_mass) {
      wce += mass.at("wce:hier");
      ce += mass.at("tce:leaf");
    }
    wce /= static_cast<double>(cache.cross_mass.size());
    ce /= static_cast<double>(cache.cross_mass.size());
    c.expect(wce < ce, "cross-branch mass wce/hier " + std::to_string(wce) +
                           " vs ce " + std::to_string(ce));
    std::printf("    seed-mean cross-branch error: wce/hier %.4f, ce baseline %.4f\n", wce, ce);
    c.finish();
  }
}

void criterion9_determinism() {
  Criterion c(9, "identical seeds produce bitwise-identical checkpoints and reports");
  GenSpec spec;
  spec.tops = 2;
  spec.mids = 2;
  spec.leaves = 2;
  spec.images = 8;
  spec.height = 24;
  spec.width = 24;
  spec.bands = 8;
  spec.folds = 4;
  spec.seed = 99;

  const auto dir = std::filesystem::temp_directory_path() / "treeloss_acceptance_det";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  std::string ckpt_bytes, metrics, sweep;
  for (int run = 0; run < 2; ++run) {
    const auto data = gen_dataset(spec);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.lr = 2e-3;
    cfg.pixels_per_image = 64;
    cfg.hidden = {16};
    cfg.seed = 7;
    cfg.loss.kind = LossKind::WassersteinCE;
    cfg.loss.scheme = WeightScheme::Hierarchical;
    std::vector<int> train_imgs;
    for (int f = 1; f < static_cast<int>(data.folds.size()); ++f)
      train_imgs.insert(train_imgs.end(), data.folds[f].begin(), data.folds[f].end());
    std::sort(train_imgs.begin(), train_imgs.end());
    const auto result = train(data, cfg, train_imgs);

    const auto path = (dir / ("model" + std::to_string(run) + ".ckpt")).string();
    save_checkpoint(path, result.model, cfg);
    const auto bytes = read_file(path);

    const auto view = make_level_view(data.tree, data.tree.depth() - 1);
    const auto scores = collect_scores(result.model, data, data.folds[0], view);
    const auto pred = predictions_at_tau(scores, 0.0);
    const auto report = metrics_csv(one_vs_rest_metrics(pred, scores.truth, view),
                                    view.level, 0.0);
    const auto sweep_report = sweep_csv(scores, view, tau_grid(21));

    if (run == 0) {
      ckpt_bytes = bytes;
      metrics = report;
      sweep = sweep_report;
    } else {
      c.expect(bytes == ckpt_bytes, "checkpoint bytes differ between runs");
      c.expect(report == metrics, "metrics report differs between runs");
      c.expect(sweep_report == sweep, "sweep report differs between runs");
    }
  }
  std::filesystem::remove_all(dir);
  c.finish();
}

void criterion10_ttest() {
  Criterion c(10, "paired t-test reproduces the textbook example and t=0 on equal inputs");
  const std::vector<double> drug1{0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0};
  const std::vector<double> drug2{1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4};
  const auto res = paired_t_test(drug1, drug2);
  c.expect(std::abs(res.t - (-4.062128)) <= 1e-3,
           "t = " + std::to_string(res.t) + " (want -4.0621)");
  c.expect(std::abs(res.p - 0.00283289) <= 1e-4, "p = " + std::to_string(res.p));

  const auto same = paired_t_test(drug1, drug1);
  c.expect(same.t == 0.0 && same.degenerate, "identical inputs must flag t = 0");
  c.finish();
}

}  // namespace

int main() {
  std::printf("treeloss acceptance suite\n");
  criterion1_crisp_vs_lp();
  criterion2_tree_vs_lp();
  criterion3_reductions();
  criterion4_gradients();
  criterion5_aggregation();
  criterion6_ood_rule();

  const auto bench_start = std::chrono::steady_clock::now();
  BenchmarkCache cache;
  try {
    cache = run_desk_benchmark();
  } catch (const std::exception& e) {
    std::printf("[FAIL] criterion  7: benchmark aborted -- %s\n", e.what());
    std::printf("[FAIL] criterion  8: benchmark aborted\n");
    g_failures += 2;
    criterion9_determinism();
    criterion10_ttest();
    return g_failures == 0 ? 0 : 1;
  }
  const double bench_seconds =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                            bench_start)
          .count() /
      1000.0;
  std::printf("    benchmark: 5 cells x 5 folds x 3 seeds in %.1fs\n", bench_seconds);
  criterion7_and_8(cache, bench_seconds);

  criterion9_determinism();
  criterion10_ttest();

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
