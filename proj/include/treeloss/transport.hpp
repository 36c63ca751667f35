// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "treeloss/tree.hpp"

namespace treeloss {

struct TransportPlan {
  int rows = 0, cols = 0;
  std::vector<double> flow;  // row-major

  double at(int i, int j) const { return flow[static_cast<std::size_t>(i) * cols + j]; }
};

struct WassersteinResult {
  double cost = 0.0;
  std::optional<TransportPlan> plan;
};

/// Validated copy of a probability vector. Entries must be >= -1e-12 and sum
/// to 1 within 1e-6; small drift is renormalized, anything worse throws.
std::vector<double> as_simplex(std::span<const double> p);

/// Index of the single unit entry of a one-hot vector; throws otherwise.
int one_hot_index(std::span<const double> g);

/// Exact optimal transport between p and q under ground distance M, solved as
/// a linear program with the transportation simplex. Reference path; O(C^3)-ish,
/// intended for verification and small C.
WassersteinResult wasserstein_lp(std::span<const double> p, std::span<const double> q,
                                 const DistanceMatrix& m, bool want_plan = false);

/// Closed form p^T M g for a crisp (one-hot) target g.
double wasserstein_crisp(std::span<const double> p, std::span<const double> g,
                         const DistanceMatrix& m);
double wasserstein_crisp(std::span<const double> p, int hot, const DistanceMatrix& m);

/// Gradient of wasserstein_crisp with respect to p: the column M[:, hot].
std::vector<double> wasserstein_crisp_gradient(int hot, const DistanceMatrix& m);

/// Tree-metric closed form: sum over edges of w_e * |subtree mass of p -
/// subtree mass of q|. Equals wasserstein_lp for the induced ground distance;
/// O(#nodes). Production path.
double wasserstein_tree(std::span<const double> p, std::span<const double> q,
                        const LabelTree& tree);

}  // namespace treeloss
