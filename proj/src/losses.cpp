// SPDX-License-Identifier: Apache-2.0
#include "treeloss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace treeloss {

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::CrossEntropy: return "ce";
    case LossKind::Wasserstein: return "w";
    case LossKind::WassersteinCE: return "wce";
    case LossKind::TreeCE: return "tce";
  }
  return "?";
}

LossKind loss_from_name(const std::string& name) {
  if (name == "ce") return LossKind::CrossEntropy;
  if (name == "w") return LossKind::Wasserstein;
  if (name == "wce") return LossKind::WassersteinCE;
  if (name == "tce") return LossKind::TreeCE;
  throw std::invalid_argument("unknown loss: " + name);
}

LossContext LossContext::make(const LabelTree& tree, const LossConfig& cfg) {
  // Plain CE ignores the tree structure; weight it LeafOnly so any scheme is
  // accepted and the TreeCE reduction identity holds within one context.
  const WeightScheme scheme =
      cfg.kind == LossKind::CrossEntropy ? WeightScheme::LeafOnly : cfg.scheme;
  LossContext ctx{tree.with_weights(scheme, cfg.custom_weights), {}};
  ctx.distances = ctx.tree.ground_distance();
  return ctx;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  double mx = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax input is not finite");
    mx = std::max(mx, z);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

static double clamped_log(double x, double eps) {
  return std::log(std::clamp(x, eps, 1.0));
}

double cross_entropy(std::span<const double> p, int hot, double eps) {
  if (hot < 0 || hot >= static_cast<int>(p.size()))
    throw std::invalid_argument("hot index out of range");
  return -clamped_log(p[hot], eps);
}

double wasserstein_ce(std::span<const double> p, int hot, const DistanceMatrix& m,
                      double alpha, double beta, double eps) {
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("alpha and beta must be >= 0");
  if (alpha == 0.0 && beta == 0.0)
    throw std::invalid_argument("alpha and beta must not both be zero");
  double loss = 0.0;
  if (alpha != 0.0) loss += alpha * cross_entropy(p, hot, eps);
  if (beta != 0.0) loss += beta * wasserstein_crisp(p, hot, m);
  return loss;
}

std::vector<double> aggregate(std::span<const double> p, const LabelTree& tree) {
  return tree.aggregate_leaf_values(p);
}

double tree_ce(std::span<const double> p, int hot, const LabelTree& tree, double eps) {
  if (!tree.weights_assigned()) throw std::logic_error("tree_ce requires assigned edge weights");
  if (hot < 0 || hot >= tree.leaf_count())
    throw std::invalid_argument("hot index out of range");
  const auto agg = tree.aggregate_leaf_values(p);
  double loss = 0.0;
  // g-dagger is 1 exactly on the hot leaf and its ancestors; the root term is
  // excluded (no incoming edge).
  for (int v = tree.leaf_order()[hot]; tree.parent(v) >= 0; v = tree.parent(v))
    loss -= tree.node_weight(v) * clamped_log(agg[v], eps);
  return loss;
}

double pixel_loss(std::span<const double> p, int hot, const LossConfig& cfg,
                  const LossContext& ctx) {
  switch (cfg.kind) {
    case LossKind::CrossEntropy: return cross_entropy(p, hot, cfg.epsilon);
    case LossKind::Wasserstein: return wasserstein_crisp(p, hot, ctx.distances);
    case LossKind::WassersteinCE:
      return wasserstein_ce(p, hot, ctx.distances, cfg.alpha, cfg.beta, cfg.epsilon);
    case LossKind::TreeCE: return tree_ce(p, hot, ctx.tree, cfg.epsilon);
  }
  throw std::logic_error("unhandled loss kind");
}

namespace {

// Chain rule through softmax: for dL/dp = s, dL/dz = p .* (s - <p, s>).
std::vector<double> through_softmax(std::span<const double> p, std::span<const double> s) {
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * s[i];
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (s[i] - dot);
  return g;
}

// Logit gradient of the tree CE term. Only the hot leaf's ancestors carry
// weight; their p-dagger masses cancel against the softmax Jacobian term, so
// the gradient is assembled from per-leaf ratios p_l / mass(v). Written this
// way the LeafOnly case collapses bitwise onto the softmax-CE form p - g.
// Clamp-saturated nodes (mass outside [eps, 1]) contribute nothing.
std::vector<double> tree_ce_logit_gradient(std::span<const double> p, int hot,
                                           const LabelTree& tree, double eps) {
  const auto agg = tree.aggregate_leaf_values(p);
  const int c = tree.leaf_count();
  std::vector<double> grad(c, 0.0);
  double active_weight = 0.0;
  std::vector<int> stack;
  for (int v = tree.leaf_order()[hot]; tree.parent(v) >= 0; v = tree.parent(v)) {
    const double w = tree.node_weight(v);
    if (w == 0.0) continue;
    const double mass = agg[v];
    if (mass < eps || mass > 1.0) continue;
    active_weight += w;
    stack.assign(1, v);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (tree.is_leaf(u)) {
        const int slot = tree.leaf_slot(u);
        grad[slot] -= w * (p[slot] / mass);
      }
      for (int ch : tree.children(u)) stack.push_back(ch);
    }
  }
  for (int j = 0; j < c; ++j) grad[j] += p[j] * active_weight;
  return grad;
}

}  // namespace

std::vector<double> loss_gradient(std::span<const double> logits, int hot,
                                  const LossConfig& cfg, const LossContext& ctx) {
  const auto p = softmax(logits);
  const int c = static_cast<int>(p.size());
  if (hot < 0 || hot >= c) throw std::invalid_argument("hot index out of range");

  switch (cfg.kind) {
    case LossKind::CrossEntropy: {
      std::vector<double> g(p.begin(), p.end());
      g[hot] -= 1.0;
      return g;
    }
    case LossKind::Wasserstein: {
      const auto col = wasserstein_crisp_gradient(hot, ctx.distances);
      return through_softmax(p, col);
    }
    case LossKind::WassersteinCE: {
      const auto col = wasserstein_crisp_gradient(hot, ctx.distances);
      auto g = through_softmax(p, col);
      for (int i = 0; i < c; ++i) {
        g[i] *= cfg.beta;
        g[i] += cfg.alpha * (p[i] - (i == hot ? 1.0 : 0.0));
      }
      return g;
    }
    case LossKind::TreeCE:
      return tree_ce_logit_gradient(p, hot, ctx.tree, cfg.epsilon);
  }
  throw std::logic_error("unhandled loss kind");
}

BatchLossResult batch_loss(const PixelBatch& batch, const LossConfig& cfg,
                           const LossContext& ctx) {
  const int b = batch.size, c = batch.classes;
  if (static_cast<int>(batch.logits.size()) != b * c ||
      static_cast<int>(batch.targets.size()) != b ||
      static_cast<int>(batch.mask.size()) != b)
    throw std::invalid_argument("batch field sizes disagree");

  BatchLossResult res;
  res.grad.assign(batch.logits.size(), 0.0);
  for (int i = 0; i < b; ++i) {
    if (!batch.mask[i]) continue;
    ++res.annotated;
    const std::span<const double> z(batch.logits.data() + static_cast<std::size_t>(i) * c, c);
    const auto p = softmax(z);
    res.value += pixel_loss(p, batch.targets[i], cfg, ctx);
    const auto g = loss_gradient(z, batch.targets[i], cfg, ctx);
    std::copy(g.begin(), g.end(), res.grad.begin() + static_cast<std::size_t>(i) * c);
  }
  if (res.annotated == 0) return res;  // zero loss, zero gradient
  const double inv = 1.0 / res.annotated;
  res.value *= inv;
  for (double& g : res.grad) g *= inv;
  return res;
}

}  // namespace treeloss
