// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "treeloss/datagen.hpp"
#include "treeloss/evaluation.hpp"
#include "treeloss/trainer.hpp"

namespace treeloss {

struct ExperimentCell {
  LossKind kind = LossKind::CrossEntropy;
  WeightScheme scheme = WeightScheme::LeafOnly;
};

struct FoldOutcome {
  int fold = 0;
  double tau_m = 0.0;
  MetricReport at_tau0, at_tau_m;
  Confusion conf_tau0, conf_tau_m;
  std::vector<double> image_f1;  // per validation image, at tau_m
  std::vector<int> image_ids;
  std::string error;  // nonempty when this cell/fold failed
};

struct CellOutcome {
  ExperimentCell cell;
  std::vector<FoldOutcome> folds;

  struct Summary {
    double tpr0_mean, tpr0_std, tprm_mean, tprm_std;
    double bacc0_mean, bacc0_std, baccm_mean, baccm_std;
    double f10_mean, f10_std, f1m_mean, f1m_std;
    double tau_m_mean;
  };
  Summary summarize() const;

  /// Fold-average of the row-normalized confusion at the given threshold kind.
  std::vector<double> mean_confusion(bool at_tau_m) const;
  /// Per-image macro-F1 at tau_m across all folds, keyed by image id.
  std::vector<std::pair<int, double>> image_scores() const;
};

struct BenchmarkConfig {
  GenSpec gen;
  TrainConfig train;
  std::vector<ExperimentCell> cells;
  int level = -1;  // -1 selects the top level (K-1)
  std::vector<double> grid = tau_grid(101);
  int workers = 0;  // 0: TREELOSS_WORKERS env var, else hardware concurrency
};

struct BenchmarkOutcome {
  LevelView view;
  std::vector<CellOutcome> cells;
  std::vector<std::vector<int>> folds;

  int failed_folds() const;
};

/// Generate the dataset, then train and evaluate every (cell, fold) pair.
/// Cells run on a small worker pool; outputs are deterministic regardless of
/// scheduling. Per-job failures are recorded in the outcome rather than
/// aborting the run. The progress callback, when set, receives one line per
/// finished job.
BenchmarkOutcome run_benchmark(const BenchmarkConfig& cfg,
                               const std::function<void(const std::string&)>& progress = {});

/// Same, with a pre-generated dataset (reused across cells).
BenchmarkOutcome run_benchmark_on(const Dataset& data, const BenchmarkConfig& cfg,
                                  const std::function<void(const std::string&)>& progress = {});

/// Table-style report: one row per cell, mean and std over folds for each
/// metric at tau0 and tau_m.
std::string report_csv(const BenchmarkOutcome& outcome);

/// Paired t-test between two cells on per-image macro-F1 at tau_m.
TTestResult compare_cells(const CellOutcome& a, const CellOutcome& b);

std::string ttest_csv(const BenchmarkOutcome& outcome,
                      const std::vector<std::pair<int, int>>& pairs);

int resolve_workers(int requested);

}  // namespace treeloss
