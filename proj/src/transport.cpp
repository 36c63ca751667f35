// SPDX-License-Identifier: Apache-2.0
#include "treeloss/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace treeloss {

std::vector<double> as_simplex(std::span<const double> p) {
  double sum = 0.0;
  for (double x : p) {
    if (!std::isfinite(x)) throw std::invalid_argument("probability entry is not finite");
    if (x < -1e-12) throw std::invalid_argument("probability entry is negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("probability vector sums to " + std::to_string(sum));
  std::vector<double> out(p.begin(), p.end());
  for (double& x : out) x = std::max(x, 0.0) / sum;
  return out;
}

int one_hot_index(std::span<const double> g) {
  int hot = -1;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0.0) continue;
    if (g[i] == 1.0 && hot < 0) {
      hot = static_cast<int>(i);
      continue;
    }
    throw std::invalid_argument("vector is not one-hot");
  }
  if (hot < 0) throw std::invalid_argument("vector is not one-hot");
  return hot;
}

namespace {

// Transportation simplex on the dense bipartite instance. Basic cells form a
// spanning tree of the row/column graph; pivots exchange one cell. Entering
// rule is most-negative reduced cost, falling back to Bland's rule after a
// long degenerate stall so termination is guaranteed.
class TransportSimplex {
 public:
  TransportSimplex(std::span<const double> supply, std::span<const double> demand,
                   const DistanceMatrix& m)
      : n_(static_cast<int>(supply.size())),
        m_(static_cast<int>(demand.size())),
        cost_(&m),
        flow_(static_cast<std::size_t>(n_) * m_, 0.0),
        basic_(static_cast<std::size_t>(n_) * m_, 0),
        u_(n_),
        v_(m_) {
    northwest_corner(supply, demand);
  }

  void solve() {
    const double eps = 1e-11 * (1.0 + cost_->max_entry());
    const long max_iters = 400L * (n_ + m_) * (n_ + m_) + 10000;
    long stall = 0;
    for (long it = 0; it < max_iters; ++it) {
      compute_potentials();
      const bool bland = stall > 4L * (n_ + m_);
      int ei = -1, ej = -1;
      double best = -eps;
      for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < m_; ++j) {
          if (basic_[idx(i, j)]) continue;
          const double red = cost_->at(i, j) - u_[i] - v_[j];
          if (red < best) {
            best = red;
            ei = i;
            ej = j;
            if (bland) break;  // Bland: first eligible cell in index order
          }
        }
        if (bland && ei >= 0) break;
      }
      if (ei < 0) return;  // optimal
      const double moved = pivot(ei, ej);
      stall = moved > eps ? 0 : stall + 1;
    }
    throw std::runtime_error("transportation simplex failed to converge");
  }

  double total_cost() const {
    double c = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) c += flow_[idx(i, j)] * cost_->at(i, j);
    return c;
  }

  TransportPlan plan() const {
    TransportPlan p;
    p.rows = n_;
    p.cols = m_;
    p.flow = flow_;
    return p;
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * m_ + j; }

  void northwest_corner(std::span<const double> supply, std::span<const double> demand) {
    std::vector<double> a(supply.begin(), supply.end());
    std::vector<double> b(demand.begin(), demand.end());
    int i = 0, j = 0;
    int placed = 0;
    while (placed < n_ + m_ - 1) {
      const double f = std::min(a[i], b[j]);
      flow_[idx(i, j)] = f;
      basic_[idx(i, j)] = 1;
      ++placed;
      a[i] -= f;
      b[j] -= f;
      // Advance along the smaller residual; on ties move down unless that
      // would leave no cell for the remaining columns.
      if (i == n_ - 1 && j == m_ - 1) break;
      if ((a[i] <= b[j] && i < n_ - 1) || j == m_ - 1)
        ++i;
      else
        ++j;
    }
  }

  // Dual potentials from the basis tree, rooted at row 0 with u[0] = 0.
  void compute_potentials() {
    std::vector<std::vector<int>> row_cells(n_), col_cells(m_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j)
        if (basic_[idx(i, j)]) {
          row_cells[i].push_back(j);
          col_cells[j].push_back(i);
        }
    std::vector<char> row_done(n_, 0), col_done(m_, 0);
    std::vector<int> stack{0};  // encoded: rows as i, cols as n_ + j
    row_done[0] = 1;
    u_[0] = 0.0;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      if (node < n_) {
        const int i = node;
        for (int j : row_cells[i])
          if (!col_done[j]) {
            col_done[j] = 1;
            v_[j] = cost_->at(i, j) - u_[i];
            stack.push_back(n_ + j);
          }
      } else {
        const int j = node - n_;
        for (int i : col_cells[j])
          if (!row_done[i]) {
            row_done[i] = 1;
            u_[i] = cost_->at(i, j) - v_[j];
            stack.push_back(i);
          }
      }
    }
    for (int i = 0; i < n_; ++i)
      if (!row_done[i]) throw std::logic_error("basis is not a spanning tree");
    for (int j = 0; j < m_; ++j)
      if (!col_done[j]) throw std::logic_error("basis is not a spanning tree");
  }

  // Bring (ei, ej) into the basis. Returns the amount of mass moved.
  double pivot(int ei, int ej) {
    // Path from row ei to column ej through basic cells; together with the
    // entering cell it closes the unique alternating cycle.
    std::vector<std::vector<int>> row_cells(n_), col_cells(m_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j)
        if (basic_[idx(i, j)]) {
          row_cells[i].push_back(j);
          col_cells[j].push_back(i);
        }
    const int nodes = n_ + m_;
    std::vector<int> prev(nodes, -2);
    std::vector<int> queue{ei};
    prev[ei] = -1;
    for (std::size_t qh = 0; qh < queue.size(); ++qh) {
      const int node = queue[qh];
      if (node == n_ + ej) break;
      if (node < n_) {
        for (int j : row_cells[node])
          if (prev[n_ + j] == -2) {
            prev[n_ + j] = node;
            queue.push_back(n_ + j);
          }
      } else {
        for (int i : col_cells[node - n_])
          if (prev[i] == -2) {
            prev[i] = node;
            queue.push_back(i);
          }
      }
    }
    if (prev[n_ + ej] == -2) throw std::logic_error("entering cell closes no cycle");

    // Walk back collecting the cycle cells; entering cell gets +, then signs
    // alternate along the path.
    std::vector<std::pair<int, int>> minus_cells, plus_cells;
    plus_cells.emplace_back(ei, ej);
    int node = n_ + ej;
    bool minus = true;  // first path cell shares column ej with the entering cell
    while (prev[node] != -1) {
      const int par = prev[node];
      const int i = node < n_ ? node : par;
      const int j = node < n_ ? par - n_ : node - n_;
      (minus ? minus_cells : plus_cells).emplace_back(i, j);
      minus = !minus;
      node = par;
    }

    double theta = std::numeric_limits<double>::infinity();
    std::pair<int, int> leave{-1, -1};
    for (const auto& [i, j] : minus_cells) {
      const double f = flow_[idx(i, j)];
      if (f < theta || (f == theta && (i < leave.first || (i == leave.first && j < leave.second)))) {
        theta = f;
        leave = {i, j};
      }
    }
    for (const auto& [i, j] : plus_cells) flow_[idx(i, j)] += theta;
    for (const auto& [i, j] : minus_cells) flow_[idx(i, j)] -= theta;
    flow_[idx(leave.first, leave.second)] = 0.0;
    basic_[idx(leave.first, leave.second)] = 0;
    basic_[idx(ei, ej)] = 1;
    return theta;
  }

  int n_, m_;
  const DistanceMatrix* cost_;
  std::vector<double> flow_;
  std::vector<char> basic_;
  std::vector<double> u_, v_;
};

}  // namespace

WassersteinResult wasserstein_lp(std::span<const double> p, std::span<const double> q,
                                 const DistanceMatrix& m, bool want_plan) {
  if (static_cast<int>(p.size()) != m.leaves || static_cast<int>(q.size()) != m.leaves)
    throw std::invalid_argument("dimension mismatch between vectors and distance matrix");
  const auto a = as_simplex(p);
  const auto b = as_simplex(q);

  TransportSimplex solver(a, b, m);
  solver.solve();

  WassersteinResult res;
  res.cost = solver.total_cost();
  if (want_plan) res.plan = solver.plan();
  return res;
}

double wasserstein_crisp(std::span<const double> p, int hot, const DistanceMatrix& m) {
  if (static_cast<int>(p.size()) != m.leaves)
    throw std::invalid_argument("dimension mismatch between p and distance matrix");
  if (hot < 0 || hot >= m.leaves) throw std::invalid_argument("hot index out of range");
  const auto a = as_simplex(p);
  double cost = 0.0;
  for (int l = 0; l < m.leaves; ++l) cost += a[l] * m.at(l, hot);
  return cost;
}

double wasserstein_crisp(std::span<const double> p, std::span<const double> g,
                         const DistanceMatrix& m) {
  return wasserstein_crisp(p, one_hot_index(g), m);
}

std::vector<double> wasserstein_crisp_gradient(int hot, const DistanceMatrix& m) {
  if (hot < 0 || hot >= m.leaves) throw std::invalid_argument("hot index out of range");
  std::vector<double> g(m.leaves);
  for (int l = 0; l < m.leaves; ++l) g[l] = m.at(l, hot);
  return g;
}

double wasserstein_tree(std::span<const double> p, std::span<const double> q,
                        const LabelTree& tree) {
  if (!tree.weights_assigned())
    throw std::logic_error("wasserstein_tree requires assigned edge weights");
  if (static_cast<int>(p.size()) != tree.leaf_count() || p.size() != q.size())
    throw std::invalid_argument("dimension mismatch between vectors and tree");
  const auto a = as_simplex(p);
  const auto b = as_simplex(q);
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const auto node_mass = tree.aggregate_leaf_values(diff);
  double cost = 0.0;
  for (int v = 0; v < tree.node_count(); ++v) {
    if (v == tree.root()) continue;
    cost += tree.node_weight(v) * std::abs(node_mass[v]);
  }
  return cost;
}

}  // namespace treeloss
