// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "treeloss/datagen.hpp"
#include "treeloss/mlp.hpp"
#include "treeloss/tree.hpp"

namespace treeloss {

/// Classes of one hierarchy level: the nodes where root-to-leaf paths cross
/// level k. Class codes are 1..C_k in ascending node-id order; 0 stays
/// reserved for OOD.
struct LevelView {
  int level = 0;
  std::vector<int> nodes;               // node indices forming the cut
  std::vector<std::string> names;       // per class
  std::vector<int> leaf_to_class;       // leaf slot -> class code 1..C_k
  std::vector<std::vector<int>> class_leaves;  // class code-1 -> leaf slots

  int classes() const { return static_cast<int>(nodes.size()); }
};

LevelView make_level_view(const LabelTree& tree, int level);

/// Level-k score vector for one pixel: the aggregated probabilities of the
/// cut classes (they partition the leaves, so the entries sum to 1).
std::vector<double> level_scores(std::span<const double> p, const LevelView& view);

/// Confidence-thresholded decision: the argmax class if its score strictly
/// exceeds tau, otherwise 0 (OOD). Ties break to the lowest class code.
int decide(std::span<const double> scores, double tau);

/// Flattened evaluation samples: one row per labelled pixel.
struct PixelScores {
  int classes = 0;
  std::vector<double> scores;  // rows x classes
  std::vector<int> truth;      // 0 = OOD ground truth, 1..C_k
  std::vector<int> image_id;   // source image per row

  long rows() const { return static_cast<long>(truth.size()); }
  std::span<const double> row(long r) const {
    return {scores.data() + static_cast<std::size_t>(r) * classes,
            static_cast<std::size_t>(classes)};
  }
};

/// Forward every labelled pixel of the selected images through the model and
/// record level-k scores plus ground truth.
PixelScores collect_scores(const Mlp& model, const Dataset& data,
                           std::span<const int> image_indices, const LevelView& view);

std::vector<int> predictions_at_tau(const PixelScores& scores, double tau);

struct ClassMetrics {
  int cls = 0;
  std::string name;
  long tp = 0, fn = 0, fp = 0, tn = 0;
  double tpr = 0.0, tnr = 0.0, bacc = 0.0, f1 = 0.0;
  long support = 0;
  bool excluded = false;  // no annotated pixels; left out of the macro means
};

struct MetricReport {
  std::vector<ClassMetrics> per_class;
  double macro_tpr = 0.0, macro_bacc = 0.0, macro_f1 = 0.0;
  long evaluated_pixels = 0;
};

/// One-vs-rest metrics over ID-truth pixels. OOD predictions on ID pixels
/// count as misses of the true class (false negatives).
MetricReport one_vs_rest_metrics(std::span<const int> pred, std::span<const int> truth,
                                 const LevelView& view);

/// Row = truth, column = prediction, code 0 = OOD on both axes. The truth-0
/// row is only populated on OOD evaluation data.
struct Confusion {
  int classes = 0;              // C_k; matrix is (C_k+1) x (C_k+1)
  std::vector<long> counts;

  long at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * (classes + 1) + pred];
  }
  long& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * (classes + 1) + pred];
  }
  long total() const;
  /// Row-normalized copy (rows with no pixels stay zero).
  std::vector<double> row_normalized() const;
};

Confusion confusion_matrix(std::span<const int> pred, std::span<const int> truth,
                           const LevelView& view);

/// Metrics recomputed from a confusion matrix; independent of the per-pixel
/// tally path and used to cross-check it.
MetricReport metrics_from_confusion(const Confusion& conf, const LevelView& view);

/// Fraction of ID-truth mass predicted as a different ID class, from a
/// row-normalized averaged confusion (OOD column ignored).
double cross_class_error_mass(std::span<const double> row_normalized, int classes);

/// Uniform threshold grid {0, 1/(n-1), ..., 1}.
std::vector<double> tau_grid(int points = 101);

struct TauSelection {
  double tau = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> grid;      // evaluated thresholds
  std::vector<double> f1_curve;  // macro-F1 per threshold
};

/// Grid value maximizing macro-F1 on the given (validation) scores; ties go
/// to the smallest threshold.
TauSelection select_tau(const PixelScores& scores, const LevelView& view,
                        std::span<const double> grid);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  long df = 0;
  bool degenerate = false;  // all differences identical (zero variance)
};

/// Two-sided paired-sample t-test.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Per-image macro-F1 at a fixed threshold, for paired statistical tests.
std::vector<double> per_image_f1(const PixelScores& scores, const LevelView& view, double tau,
                                 std::vector<int>* image_ids = nullptr);

std::string metrics_csv(const MetricReport& report, int level, double tau);
std::string confusion_csv(const Confusion& conf, const LevelView& view, bool row_normalized);
std::string sweep_csv(const PixelScores& scores, const LevelView& view,
                      std::span<const double> grid);

}  // namespace treeloss
