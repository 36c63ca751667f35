// SPDX-License-Identifier: Apache-2.0
#include "treeloss/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace treeloss {

namespace {

struct Stats {
  double mean = 0.0, stdev = 0.0;
};

Stats mean_std(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0));
  }
  return s;
}

}  // namespace

int BenchmarkOutcome::failed_folds() const {
  int n = 0;
  for (const auto& cell : cells)
    for (const auto& f : cell.folds)
      if (!f.error.empty()) ++n;
  return n;
}

CellOutcome::Summary CellOutcome::summarize() const {
  auto collect = [&](auto pick) {
    std::vector<double> xs;
    for (const auto& f : folds)
      if (f.error.empty()) xs.push_back(pick(f));
    return mean_std(xs);
  };
  Summary s{};
  const auto tpr0 = collect([](const FoldOutcome& f) { return f.at_tau0.macro_tpr; });
  const auto tprm = collect([](const FoldOutcome& f) { return f.at_tau_m.macro_tpr; });
  const auto bacc0 = collect([](const FoldOutcome& f) { return f.at_tau0.macro_bacc; });
  const auto baccm = collect([](const FoldOutcome& f) { return f.at_tau_m.macro_bacc; });
  const auto f10 = collect([](const FoldOutcome& f) { return f.at_tau0.macro_f1; });
  const auto f1m = collect([](const FoldOutcome& f) { return f.at_tau_m.macro_f1; });
  const auto taum = collect([](const FoldOutcome& f) { return f.tau_m; });
  s.tpr0_mean = tpr0.mean;
  s.tpr0_std = tpr0.stdev;
  s.tprm_mean = tprm.mean;
  s.tprm_std = tprm.stdev;
  s.bacc0_mean = bacc0.mean;
  s.bacc0_std = bacc0.stdev;
  s.baccm_mean = baccm.mean;
  s.baccm_std = baccm.stdev;
  s.f10_mean = f10.mean;
  s.f10_std = f10.stdev;
  s.f1m_mean = f1m.mean;
  s.f1m_std = f1m.stdev;
  s.tau_m_mean = taum.mean;
  return s;
}

std::vector<double> CellOutcome::mean_confusion(bool at_tau_m) const {
  std::vector<double> acc;
  int used = 0;
  for (const auto& f : folds) {
    if (!f.error.empty()) continue;
    const auto norm = (at_tau_m ? f.conf_tau_m : f.conf_tau0).row_normalized();
    if (acc.empty()) acc.assign(norm.size(), 0.0);
    for (std::size_t i = 0; i < norm.size(); ++i) acc[i] += norm[i];
    ++used;
  }
  if (used > 0)
    for (double& x : acc) x /= static_cast<double>(used);
  return acc;
}

std::vector<std::pair<int, double>> CellOutcome::image_scores() const {
  std::vector<std::pair<int, double>> out;
  for (const auto& f : folds) {
    if (!f.error.empty()) continue;
    for (std::size_t i = 0; i < f.image_ids.size(); ++i)
      out.emplace_back(f.image_ids[i], f.image_f1[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TREELOSS_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

BenchmarkOutcome run_benchmark(const BenchmarkConfig& cfg,
                               const std::function<void(const std::string&)>& progress) {
  const Dataset data = gen_dataset(cfg.gen);
  return run_benchmark_on(data, cfg, progress);
}

BenchmarkOutcome run_benchmark_on(const Dataset& data, const BenchmarkConfig& cfg,
                                  const std::function<void(const std::string&)>& progress) {
  if (cfg.cells.empty()) throw std::invalid_argument("no experiment cells configured");
  if (data.folds.empty()) throw std::invalid_argument("dataset has no fold splits");

  const int level = cfg.level >= 0 ? cfg.level : data.tree.depth() - 1;
  BenchmarkOutcome outcome;
  outcome.view = make_level_view(data.tree, level);
  outcome.folds = data.folds;
  outcome.cells.resize(cfg.cells.size());
  const int n_folds = static_cast<int>(data.folds.size());
  for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
    outcome.cells[c].cell = cfg.cells[c];
    outcome.cells[c].folds.resize(n_folds);
  }

  struct Job {
    int cell, fold;
  };
  std::vector<Job> jobs;
  for (int c = 0; c < static_cast<int>(cfg.cells.size()); ++c)
    for (int f = 0; f < n_folds; ++f) jobs.push_back({c, f});

  std::atomic<std::size_t> next{0};
  std::mutex progress_mu;

  auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      try {
        const ExperimentCell& cell = cfg.cells[job.cell];
        TrainConfig tc = cfg.train;
        tc.loss.kind = cell.kind;
        tc.loss.scheme = cell.scheme;

        std::vector<int> train_images, val_images;
        for (int f = 0; f < n_folds; ++f)
          for (int img : data.folds[f])
            (f == job.fold ? val_images : train_images).push_back(img);
        std::sort(train_images.begin(), train_images.end());

        const TrainResult tr = train(data, tc, train_images);
        const PixelScores scores =
            collect_scores(tr.model, data, val_images, outcome.view);

        FoldOutcome out;
        out.fold = job.fold;
        const auto pred0 = predictions_at_tau(scores, 0.0);
        out.at_tau0 = one_vs_rest_metrics(pred0, scores.truth, outcome.view);
        out.conf_tau0 = confusion_matrix(pred0, scores.truth, outcome.view);

        const auto sel = select_tau(scores, outcome.view, cfg.grid);
        out.tau_m = sel.tau;
        const auto predm = predictions_at_tau(scores, sel.tau);
        out.at_tau_m = one_vs_rest_metrics(predm, scores.truth, outcome.view);
        out.conf_tau_m = confusion_matrix(predm, scores.truth, outcome.view);
        out.image_f1 = per_image_f1(scores, outcome.view, sel.tau, &out.image_ids);
        outcome.cells[job.cell].folds[job.fold] = std::move(out);

        if (progress) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "%s/%s fold %d: f1@0=%.4f f1@%.2f=%.4f",
                        loss_name(cell.kind).c_str(), scheme_name(cell.scheme).c_str(),
                        job.fold, outcome.cells[job.cell].folds[job.fold].at_tau0.macro_f1,
                        outcome.cells[job.cell].folds[job.fold].tau_m,
                        outcome.cells[job.cell].folds[job.fold].at_tau_m.macro_f1);
          std::lock_guard<std::mutex> lock(progress_mu);
          progress(buf);
        }
      } catch (const std::exception& e) {
        auto& slot = outcome.cells[job.cell].folds[job.fold];
        slot.fold = job.fold;
        slot.error = e.what();
      }
    }
  };

  const int workers = std::min<int>(resolve_workers(cfg.workers), static_cast<int>(jobs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return outcome;
}

std::string report_csv(const BenchmarkOutcome& outcome) {
  std::ostringstream out;
  out << "loss,scheme,tpr_tau0_mean,tpr_tau0_std,tpr_taum_mean,tpr_taum_std,"
         "bacc_tau0_mean,bacc_tau0_std,bacc_taum_mean,bacc_taum_std,"
         "f1_tau0_mean,f1_tau0_std,f1_taum_mean,f1_taum_std,tau_m_mean,failed_folds\n";
  char buf[400];
  for (const auto& cell : outcome.cells) {
    const auto s = cell.summarize();
    int failed = 0;
    for (const auto& f : cell.folds)
      if (!f.error.empty()) ++failed;
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n",
                  loss_name(cell.cell.kind).c_str(), scheme_name(cell.cell.scheme).c_str(),
                  s.tpr0_mean, s.tpr0_std, s.tprm_mean, s.tprm_std, s.bacc0_mean, s.bacc0_std,
                  s.baccm_mean, s.baccm_std, s.f10_mean, s.f10_std, s.f1m_mean, s.f1m_std,
                  s.tau_m_mean, failed);
    out << buf;
  }
  return out.str();
}

TTestResult compare_cells(const CellOutcome& a, const CellOutcome& b) {
  const auto sa = a.image_scores();
  const auto sb = b.image_scores();
  std::map<int, double> by_id(sb.begin(), sb.end());
  std::vector<double> xs, ys;
  for (const auto& [id, f1] : sa) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    xs.push_back(f1);
    ys.push_back(it->second);
  }
  return paired_t_test(xs, ys);
}

std::string ttest_csv(const BenchmarkOutcome& outcome,
                      const std::vector<std::pair<int, int>>& pairs) {
  std::ostringstream out;
  out << "cell_a,cell_b,t,p,df,degenerate\n";
  char buf[240];
  for (const auto& [ia, ib] : pairs) {
    const auto& a = outcome.cells.at(ia);
    const auto& b = outcome.cells.at(ib);
    const auto res = compare_cells(a, b);
    std::snprintf(buf, sizeof buf, "%s-%s,%s-%s,%.6f,%.6g,%ld,%d\n",
                  loss_name(a.cell.kind).c_str(), scheme_name(a.cell.scheme).c_str(),
                  loss_name(b.cell.kind).c_str(), scheme_name(b.cell.scheme).c_str(), res.t,
                  res.p, res.df, res.degenerate ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace treeloss
