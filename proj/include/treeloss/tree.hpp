// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace treeloss {

/// One node of a label hierarchy as it appears in a tree file.
struct TreeNode {
  int id = 0;
  std::string name;
  std::optional<int> parent;           // absent on the root
  std::optional<double> edge_weight;   // weight of the edge parent -> this
};

/// Edge-weight assignment strategies. Each edge takes the weight of its
/// level, where the level of an edge is the level of its child node.
enum class WeightScheme {
  LeafOnly,      // 1 on edges into level-0 nodes, 0 elsewhere
  TopOnly,       // 1 on edges into level K-1 nodes (children of the root), 0 elsewhere
  Equal,         // 1 everywhere
  Hierarchical,  // 100 / 10 / 1 on top / middle / bottom edges of a 3-level tree
  Custom,        // caller-supplied map level -> weight
};

std::string scheme_name(WeightScheme s);
WeightScheme scheme_from_name(const std::string& name);

/// Dense leaf-to-leaf ground distances induced by tree path lengths.
struct DistanceMatrix {
  int leaves = 0;
  std::vector<double> d;  // row-major leaves x leaves

  double at(int i, int j) const { return d[static_cast<std::size_t>(i) * leaves + j]; }
  double& at(int i, int j) { return d[static_cast<std::size_t>(i) * leaves + j]; }
  double max_entry() const;
  bool all_zero() const;
};

/// Weighted rooted label hierarchy.
///
/// Nodes are stored sorted by ascending id; the position in that order is the
/// node index used throughout the library. Leaves, in ascending id order,
/// define the coordinates of leaf probability vectors (slot 0..C-1, class
/// codes 1..C). Levels follow the leaf-up convention: level 0 for every leaf,
/// otherwise 1 + max over children; the root sits at level K.
class LabelTree {
 public:
  LabelTree() = default;  // empty placeholder; assign a parsed tree before use

  static LabelTree from_nodes(std::vector<TreeNode> nodes);
  static LabelTree from_json(const std::string& text);
  static LabelTree load(const std::string& path);

  std::string to_json() const;
  void save(const std::string& path) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int leaf_count() const { return static_cast<int>(leaf_nodes_.size()); }
  int depth() const { return levels_[root_]; }  // K
  int root() const { return root_; }

  const TreeNode& node(int idx) const { return nodes_[idx]; }
  int parent(int idx) const { return parents_[idx]; }  // -1 on the root
  const std::vector<int>& children(int idx) const { return children_[idx]; }
  int level(int idx) const { return levels_[idx]; }
  bool is_leaf(int idx) const { return children_[idx].empty(); }

  int index_of_id(int id) const;

  /// Leaf node indices in ascending id order; position = leaf slot.
  const std::vector<int>& leaf_order() const { return leaf_nodes_; }
  /// Leaf slot of a node index, or -1 for internal nodes.
  int leaf_slot(int idx) const { return leaf_slot_[idx]; }

  bool weights_assigned() const { return weights_assigned_; }
  /// Weight of the edge into a node (node as child). Zero-cost on the root.
  double node_weight(int idx) const { return node_weight_[idx]; }

  /// Set of edge levels present, i.e. levels of all non-root nodes.
  std::vector<int> edge_levels() const;

  /// Copy of the tree with scheme weights applied to every edge.
  LabelTree with_weights(WeightScheme scheme,
                         const std::map<int, double>& custom = {}) const;

  /// Leaf-to-leaf path-length distances under the current edge weights.
  DistanceMatrix ground_distance() const;

  /// Bottom-up subtree sums: out[v] = sum of leaf_values over leaves under v
  /// (node itself included when it is a leaf). Output indexed by node index.
  std::vector<double> aggregate_leaf_values(std::span<const double> leaf_values) const;

  /// Nodes where root-to-leaf paths cross level k: level(v) <= k < level(parent(v)).
  /// These partition the leaves. k must lie in [0, K-1].
  std::vector<int> level_cut(int k) const;

  /// Node index at which the path of a given leaf slot crosses level k.
  int ancestor_at_level(int leaf_slot, int k) const;

  /// Node indices in bottom-up order (every child precedes its parent).
  const std::vector<int>& topo_order() const { return topo_; }

 private:
  void build_derived();

  std::vector<TreeNode> nodes_;
  std::vector<int> parents_;
  std::vector<std::vector<int>> children_;
  std::vector<int> levels_;
  std::vector<int> leaf_nodes_;
  std::vector<int> leaf_slot_;
  std::vector<int> topo_;
  std::vector<double> node_weight_;
  int root_ = -1;
  bool weights_assigned_ = false;
};

/// Parent-of-child incidence over all nodes: (A x)[u] = sum of x over the
/// children of u. A is nilpotent, A^k = 0 for k > K.
class AdjacencyOperator {
 public:
  explicit AdjacencyOperator(const LabelTree& tree) : tree_(&tree) {}
  std::vector<double> apply(std::span<const double> node_values) const;

 private:
  const LabelTree* tree_;
};

/// CSV dump of a distance matrix with leaf names on both axes.
std::string distance_matrix_csv(const LabelTree& tree, const DistanceMatrix& m);

}  // namespace treeloss
