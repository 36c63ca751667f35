// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "treeloss/transport.hpp"
#include "treeloss/tree.hpp"

namespace treeloss {

enum class LossKind { CrossEntropy, Wasserstein, WassersteinCE, TreeCE };

std::string loss_name(LossKind k);
LossKind loss_from_name(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::CrossEntropy;
  WeightScheme scheme = WeightScheme::LeafOnly;
  std::map<int, double> custom_weights;  // only read for WeightScheme::Custom
  double alpha = 0.5;                    // CE share of the combined loss
  double beta = 0.5;                     // Wasserstein share
  double epsilon = 1e-12;                // clamp floor for probabilities under log
};

/// Weighted tree plus its induced ground distances, precomputed once and
/// shared by every per-pixel loss evaluation.
struct LossContext {
  LabelTree tree;
  DistanceMatrix distances;

  static LossContext make(const LabelTree& tree, const LossConfig& cfg);
};

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);

/// -log p[hot] with the probability clamped to [eps, 1].
double cross_entropy(std::span<const double> p, int hot, double eps = 1e-12);

/// alpha * CE + beta * W^M against a crisp target.
double wasserstein_ce(std::span<const double> p, int hot, const DistanceMatrix& m,
                      double alpha, double beta, double eps = 1e-12);

/// All-node probabilities: leaves keep their mass, internal nodes take their
/// subtree sum, the root collects everything. Indexed by node index.
std::vector<double> aggregate(std::span<const double> p, const LabelTree& tree);

/// Extended weighted CE over all non-root nodes of the hierarchy.
double tree_ce(std::span<const double> p, int hot, const LabelTree& tree, double eps = 1e-12);

/// Loss value of the configured kind for softmax probabilities p.
double pixel_loss(std::span<const double> p, int hot, const LossConfig& cfg,
                  const LossContext& ctx);

/// Exact gradient of the configured loss with respect to the logits.
std::vector<double> loss_gradient(std::span<const double> logits, int hot,
                                  const LossConfig& cfg, const LossContext& ctx);

struct PixelBatch {
  int size = 0, classes = 0;
  std::vector<double> logits;        // size x classes, row-major
  std::vector<int> targets;          // leaf slots, valid where mask is set
  std::vector<std::uint8_t> mask;    // 1 = annotated

  double logit(int b, int c) const { return logits[static_cast<std::size_t>(b) * classes + c]; }
};

struct BatchLossResult {
  double value = 0.0;
  std::vector<double> grad;  // size x classes, zero rows where mask is unset
  int annotated = 0;
};

/// Mean loss over annotated pixels with matching logit gradients. An empty
/// mask yields zero loss and zero gradient.
BatchLossResult batch_loss(const PixelBatch& batch, const LossConfig& cfg,
                           const LossContext& ctx);

}  // namespace treeloss
