// SPDX-License-Identifier: Apache-2.0
#include "treeloss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "treeloss/losses.hpp"
#include "treeloss/trainer.hpp"

namespace treeloss {

LevelView make_level_view(const LabelTree& tree, int level) {
  LevelView view;
  view.level = level;
  view.nodes = tree.level_cut(level);
  std::vector<int> node_to_class(tree.node_count(), 0);
  for (std::size_t i = 0; i < view.nodes.size(); ++i) {
    view.names.push_back(tree.node(view.nodes[i]).name);
    node_to_class[view.nodes[i]] = static_cast<int>(i) + 1;
  }
  view.leaf_to_class.resize(tree.leaf_count());
  view.class_leaves.resize(view.nodes.size());
  for (int s = 0; s < tree.leaf_count(); ++s) {
    const int anc = tree.ancestor_at_level(s, level);
    const int cls = node_to_class[anc];
    view.leaf_to_class[s] = cls;
    view.class_leaves[cls - 1].push_back(s);
  }
  return view;
}

std::vector<double> level_scores(std::span<const double> p, const LevelView& view) {
  std::vector<double> out(view.classes(), 0.0);
  for (int c = 0; c < view.classes(); ++c)
    for (int s : view.class_leaves[c]) out[c] += p[s];
  return out;
}

int decide(std::span<const double> scores, double tau) {
  if (scores.empty()) throw std::invalid_argument("empty score vector");
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  return scores[best] > tau ? best + 1 : 0;
}

PixelScores collect_scores(const Mlp& model, const Dataset& data,
                           std::span<const int> image_indices, const LevelView& view) {
  PixelScores out;
  out.classes = view.classes();
  Mlp::Workspace ws;
  std::vector<double> pixel;
  for (int idx : image_indices) {
    const bool ood = idx < 0;  // negative index -1-k selects ood_images[k]
    const auto& img = ood ? data.ood_images.at(-1 - idx) : data.images.at(idx);
    const int bands = img.cube.bands;
    pixel.resize(bands);
    for (std::size_t pix = 0; pix < img.labels.labels.size(); ++pix) {
      const std::int32_t code = img.labels.labels[pix];
      if (code < 0) continue;  // unannotated
      for (int b = 0; b < bands; ++b)
        pixel[b] = img.cube.values[static_cast<std::size_t>(pix) * bands + b];
      const auto x = l1_normalize(pixel);
      const auto logits = model.forward(x, ws);
      const auto probs = softmax(logits);
      const auto scores = level_scores(probs, view);
      out.scores.insert(out.scores.end(), scores.begin(), scores.end());
      out.truth.push_back(code == 0 ? 0 : view.leaf_to_class[code - 1]);
      out.image_id.push_back(idx);
    }
  }
  return out;
}

std::vector<int> predictions_at_tau(const PixelScores& scores, double tau) {
  std::vector<int> pred(scores.rows());
  for (long r = 0; r < scores.rows(); ++r) pred[r] = decide(scores.row(r), tau);
  return pred;
}

namespace {

void finalize_metrics(ClassMetrics& m) {
  m.support = m.tp + m.fn;
  const long neg = m.fp + m.tn;
  m.tpr = m.support > 0 ? static_cast<double>(m.tp) / m.support : 0.0;
  m.tnr = neg > 0 ? static_cast<double>(m.tn) / neg : 0.0;
  m.bacc = 0.5 * (m.tpr + m.tnr);
  const long denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom > 0 ? 2.0 * m.tp / denom : 0.0;
  m.excluded = m.support == 0;
}

void fill_macro(MetricReport& report) {
  int counted = 0;
  for (const auto& m : report.per_class) {
    if (m.excluded) continue;
    report.macro_tpr += m.tpr;
    report.macro_bacc += m.bacc;
    report.macro_f1 += m.f1;
    ++counted;
  }
  if (counted > 0) {
    report.macro_tpr /= counted;
    report.macro_bacc /= counted;
    report.macro_f1 /= counted;
  }
}

}  // namespace

MetricReport one_vs_rest_metrics(std::span<const int> pred, std::span<const int> truth,
                                 const LevelView& view) {
  if (pred.size() != truth.size()) throw std::invalid_argument("pred/truth length mismatch");
  MetricReport report;
  report.per_class.resize(view.classes());
  for (int c = 0; c < view.classes(); ++c) {
    report.per_class[c].cls = c + 1;
    report.per_class[c].name = view.names[c];
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    if (t < 1) continue;  // OOD ground truth is not an ID class
    ++report.evaluated_pixels;
    for (int c = 1; c <= view.classes(); ++c) {
      auto& m = report.per_class[c - 1];
      const bool pos = t == c;
      const bool hit = pred[i] == c;  // an OOD prediction is never a hit
      if (pos && hit)
        ++m.tp;
      else if (pos)
        ++m.fn;
      else if (hit)
        ++m.fp;
      else
        ++m.tn;
    }
  }
  for (auto& m : report.per_class) finalize_metrics(m);
  fill_macro(report);
  return report;
}

long Confusion::total() const {
  long t = 0;
  for (long v : counts) t += v;
  return t;
}

std::vector<double> Confusion::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  const int n = classes + 1;
  for (int r = 0; r < n; ++r) {
    long row = 0;
    for (int c = 0; c < n; ++c) row += at(r, c);
    if (row == 0) continue;
    for (int c = 0; c < n; ++c)
      out[static_cast<std::size_t>(r) * n + c] = static_cast<double>(at(r, c)) / row;
  }
  return out;
}

Confusion confusion_matrix(std::span<const int> pred, std::span<const int> truth,
                           const LevelView& view) {
  if (pred.size() != truth.size()) throw std::invalid_argument("pred/truth length mismatch");
  Confusion conf;
  conf.classes = view.classes();
  conf.counts.assign(static_cast<std::size_t>(conf.classes + 1) * (conf.classes + 1), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] > conf.classes || pred[i] < 0 || pred[i] > conf.classes)
      throw std::invalid_argument("label code out of range in confusion tally");
    ++conf.at(truth[i], pred[i]);
  }
  return conf;
}

MetricReport metrics_from_confusion(const Confusion& conf, const LevelView& view) {
  MetricReport report;
  report.per_class.resize(view.classes());
  long id_total = 0;
  for (int t = 1; t <= conf.classes; ++t)
    for (int p = 0; p <= conf.classes; ++p) id_total += conf.at(t, p);
  for (int c = 1; c <= conf.classes; ++c) {
    auto& m = report.per_class[c - 1];
    m.cls = c;
    m.name = view.names[c - 1];
    long pred_c = 0;
    for (int t = 1; t <= conf.classes; ++t) pred_c += conf.at(t, c);
    long truth_c = 0;
    for (int p = 0; p <= conf.classes; ++p) truth_c += conf.at(c, p);
    m.tp = conf.at(c, c);
    m.fn = truth_c - m.tp;
    m.fp = pred_c - m.tp;
    m.tn = id_total - truth_c - m.fp;
    finalize_metrics(m);
  }
  report.evaluated_pixels = id_total;
  fill_macro(report);
  return report;
}

double cross_class_error_mass(std::span<const double> row_normalized, int classes) {
  const int n = classes + 1;
  double mass = 0.0;
  for (int t = 1; t <= classes; ++t)
    for (int p = 1; p <= classes; ++p)
      if (p != t) mass += row_normalized[static_cast<std::size_t>(t) * n + p];
  return mass;
}

std::vector<double> tau_grid(int points) {
  if (points < 1) throw std::invalid_argument("grid needs at least one point");
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i)
    grid[i] = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
  return grid;
}

TauSelection select_tau(const PixelScores& scores, const LevelView& view,
                        std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("empty tau grid");
  TauSelection sel;
  sel.grid.assign(grid.begin(), grid.end());
  sel.tau = grid[0];
  sel.macro_f1 = -1.0;
  for (double tau : grid) {
    const auto pred = predictions_at_tau(scores, tau);
    const auto report = one_vs_rest_metrics(pred, scores.truth, view);
    sel.f1_curve.push_back(report.macro_f1);
    if (report.macro_f1 > sel.macro_f1) {
      sel.macro_f1 = report.macro_f1;
      sel.tau = tau;
    }
  }
  return sel;
}

// Regularized incomplete beta via its continued fraction (Lentz's method);
// standard route to the Student t tail probability.
static double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-15) break;
  }
  return h;
}

static double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired samples differ in length");
  const long n = static_cast<long>(a.size());
  if (n < 2) throw std::invalid_argument("need at least 2 pairs");

  double mean = 0.0;
  for (long i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult res;
  res.df = n - 1;
  const double var = ss / res.df;
  if (var <= 0.0) {
    res.degenerate = true;
    res.t = 0.0;
    res.p = 1.0;
    return res;
  }
  res.t = mean / std::sqrt(var / n);
  const double df = static_cast<double>(res.df);
  res.p = incomplete_beta(0.5 * df, 0.5, df / (df + res.t * res.t));
  return res;
}

std::vector<double> per_image_f1(const PixelScores& scores, const LevelView& view, double tau,
                                 std::vector<int>* image_ids) {
  std::vector<int> ids;
  for (long r = 0; r < scores.rows(); ++r)
    if (ids.empty() || ids.back() != scores.image_id[r]) ids.push_back(scores.image_id[r]);
  std::vector<double> out;
  for (int id : ids) {
    PixelScores sub;
    sub.classes = scores.classes;
    for (long r = 0; r < scores.rows(); ++r) {
      if (scores.image_id[r] != id) continue;
      const auto row = scores.row(r);
      sub.scores.insert(sub.scores.end(), row.begin(), row.end());
      sub.truth.push_back(scores.truth[r]);
      sub.image_id.push_back(id);
    }
    const auto pred = predictions_at_tau(sub, tau);
    out.push_back(one_vs_rest_metrics(pred, sub.truth, view).macro_f1);
  }
  if (image_ids) *image_ids = ids;
  return out;
}

std::string metrics_csv(const MetricReport& report, int level, double tau) {
  std::ostringstream out;
  out << "class,level,tau,tpr,bacc,f1,support\n";
  char buf[192];
  for (const auto& m : report.per_class) {
    if (m.excluded) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.6g,,,,0\n", m.name.c_str(), level, tau);
    } else {
      std::snprintf(buf, sizeof buf, "%s,%d,%.6g,%.6f,%.6f,%.6f,%ld\n", m.name.c_str(), level,
                    tau, m.tpr, m.bacc, m.f1, m.support);
    }
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "macro,%d,%.6g,%.6f,%.6f,%.6f,%ld\n", level, tau,
                report.macro_tpr, report.macro_bacc, report.macro_f1,
                report.evaluated_pixels);
  out << buf;
  return out.str();
}

std::string confusion_csv(const Confusion& conf, const LevelView& view, bool row_normalized) {
  std::ostringstream out;
  out << "truth";
  for (const auto& n : view.names) out << ',' << n;
  out << ",OOD\n";
  const int n = conf.classes + 1;
  const auto norm = conf.row_normalized();
  char buf[64];
  auto emit_row = [&](int t, const std::string& name) {
    out << name;
    for (int p = 1; p <= conf.classes; ++p) {
      if (row_normalized) {
        std::snprintf(buf, sizeof buf, ",%.6f", norm[static_cast<std::size_t>(t) * n + p]);
        out << buf;
      } else {
        out << ',' << conf.at(t, p);
      }
    }
    if (row_normalized) {
      std::snprintf(buf, sizeof buf, ",%.6f", norm[static_cast<std::size_t>(t) * n + 0]);
      out << buf;
    } else {
      out << ',' << conf.at(t, 0);
    }
    out << '\n';
  };
  for (int t = 1; t <= conf.classes; ++t) emit_row(t, view.names[t - 1]);
  // truth-OOD row only when such pixels were evaluated
  long ood_row = 0;
  for (int p = 0; p <= conf.classes; ++p) ood_row += conf.at(0, p);
  if (ood_row > 0) emit_row(0, "OOD");
  return out.str();
}

std::string sweep_csv(const PixelScores& scores, const LevelView& view,
                      std::span<const double> grid) {
  std::ostringstream out;
  out << "tau,ood_fraction,macro_tpr,macro_bacc,macro_f1\n";
  char buf[160];
  for (double tau : grid) {
    const auto pred = predictions_at_tau(scores, tau);
    long ood = 0;
    for (int p : pred)
      if (p == 0) ++ood;
    const auto report = one_vs_rest_metrics(pred, scores.truth, view);
    std::snprintf(buf, sizeof buf, "%.6g,%.6f,%.6f,%.6f,%.6f\n", tau,
                  pred.empty() ? 0.0 : static_cast<double>(ood) / pred.size(),
                  report.macro_tpr, report.macro_bacc, report.macro_f1);
    out << buf;
  }
  return out.str();
}

}  // namespace treeloss
