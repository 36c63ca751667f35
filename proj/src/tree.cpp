// SPDX-License-Identifier: Apache-2.0
#include "treeloss/tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace treeloss {

using json = nlohmann::json;

std::string scheme_name(WeightScheme s) {
  switch (s) {
    case WeightScheme::LeafOnly: return "leaf";
    case WeightScheme::TopOnly: return "top";
    case WeightScheme::Equal: return "equal";
    case WeightScheme::Hierarchical: return "hier";
    case WeightScheme::Custom: return "custom";
  }
  return "?";
}

WeightScheme scheme_from_name(const std::string& name) {
  if (name == "leaf") return WeightScheme::LeafOnly;
  if (name == "top") return WeightScheme::TopOnly;
  if (name == "equal") return WeightScheme::Equal;
  if (name == "hier") return WeightScheme::Hierarchical;
  if (name == "custom") return WeightScheme::Custom;
  throw std::invalid_argument("unknown weight scheme: " + name);
}

double DistanceMatrix::max_entry() const {
  double m = 0.0;
  for (double x : d) m = std::max(m, x);
  return m;
}

bool DistanceMatrix::all_zero() const {
  for (double x : d)
    if (x != 0.0) return false;
  return true;
}

LabelTree LabelTree::from_nodes(std::vector<TreeNode> nodes) {
  if (nodes.size() < 2) throw std::invalid_argument("tree needs at least 2 nodes");
  std::sort(nodes.begin(), nodes.end(),
            [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (nodes[i].id == nodes[i - 1].id)
      throw std::invalid_argument("duplicate node id " + std::to_string(nodes[i].id));

  LabelTree t;
  t.nodes_ = std::move(nodes);
  t.build_derived();
  return t;
}

void LabelTree::build_derived() {
  const int n = node_count();
  std::unordered_map<int, int> index_by_id;
  index_by_id.reserve(nodes_.size());
  for (int i = 0; i < n; ++i) index_by_id[nodes_[i].id] = i;

  parents_.assign(n, -1);
  children_.assign(n, {});
  node_weight_.assign(n, 0.0);
  root_ = -1;
  weights_assigned_ = true;
  for (int i = 0; i < n; ++i) {
    const TreeNode& nd = nodes_[i];
    if (!nd.parent) {
      if (root_ != -1)
        throw std::invalid_argument("multiple roots: nodes " +
                                    std::to_string(nodes_[root_].id) + " and " +
                                    std::to_string(nd.id));
      root_ = i;
      continue;
    }
    auto it = index_by_id.find(*nd.parent);
    if (it == index_by_id.end())
      throw std::invalid_argument("node " + std::to_string(nd.id) +
                                  " references unknown parent " + std::to_string(*nd.parent));
    if (it->second == i)
      throw std::invalid_argument("node " + std::to_string(nd.id) + " is its own parent");
    parents_[i] = it->second;
    children_[it->second].push_back(i);
    if (nd.edge_weight) {
      if (*nd.edge_weight < 0.0 || !std::isfinite(*nd.edge_weight))
        throw std::invalid_argument("negative edge weight on node " + std::to_string(nd.id));
      node_weight_[i] = *nd.edge_weight;
    } else {
      weights_assigned_ = false;
    }
  }
  if (root_ == -1) throw std::invalid_argument("no root node (cycle or empty tree)");

  // Reachability from the root doubles as the cycle check: a parent cycle is
  // unreachable and shows up as a count mismatch.
  topo_.clear();
  topo_.reserve(n);
  std::vector<int> stack{root_};
  std::vector<int> order;
  order.reserve(n);
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int c : children_[v]) stack.push_back(c);
  }
  if (static_cast<int>(order.size()) != n)
    throw std::invalid_argument("cycle detected: not all nodes reach the root");
  topo_.assign(order.rbegin(), order.rend());  // children before parents

  levels_.assign(n, 0);
  for (int v : topo_) {
    int lv = 0;
    for (int c : children_[v]) lv = std::max(lv, levels_[c] + 1);
    levels_[v] = lv;
  }

  leaf_nodes_.clear();
  leaf_slot_.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    if (children_[i].empty()) {
      leaf_slot_[i] = static_cast<int>(leaf_nodes_.size());
      leaf_nodes_.push_back(i);  // nodes_ is id-sorted, so this is ascending id
    }
  }
  if (leaf_count() < 2) throw std::invalid_argument("tree needs at least 2 leaves");
}

LabelTree LabelTree::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("tree file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
    throw std::invalid_argument("tree file must be an object with a \"nodes\" array");

  std::vector<TreeNode> nodes;
  nodes.reserve(doc["nodes"].size());
  for (const auto& jn : doc["nodes"]) {
    TreeNode nd;
    nd.id = jn.at("id").get<int>();
    nd.name = jn.value("name", std::string{});
    if (jn.contains("parent") && !jn["parent"].is_null()) nd.parent = jn["parent"].get<int>();
    if (jn.contains("edge_weight") && !jn["edge_weight"].is_null())
      nd.edge_weight = jn["edge_weight"].get<double>();
    nodes.push_back(std::move(nd));
  }
  return from_nodes(std::move(nodes));
}

LabelTree LabelTree::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tree file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string LabelTree::to_json() const {
  json arr = json::array();
  for (const auto& nd : nodes_) {
    json jn;
    jn["id"] = nd.id;
    jn["name"] = nd.name;
    if (nd.parent)
      jn["parent"] = *nd.parent;
    else
      jn["parent"] = nullptr;
    if (weights_assigned_ && nd.parent)
      jn["edge_weight"] = node_weight_[index_of_id(nd.id)];
    arr.push_back(std::move(jn));
  }
  json doc;
  doc["nodes"] = std::move(arr);
  return doc.dump(2) + "\n";
}

void LabelTree::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write tree file: " + path);
  out << to_json();
}

int LabelTree::index_of_id(int id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                             [](const TreeNode& n, int v) { return n.id < v; });
  if (it == nodes_.end() || it->id != id)
    throw std::invalid_argument("unknown node id " + std::to_string(id));
  return static_cast<int>(it - nodes_.begin());
}

std::vector<int> LabelTree::edge_levels() const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i)
    if (i != root_) out.push_back(levels_[i]);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LabelTree LabelTree::with_weights(WeightScheme scheme,
                                  const std::map<int, double>& custom) const {
  const int k = depth();
  auto weight_for_level = [&](int lv) -> double {
    switch (scheme) {
      case WeightScheme::LeafOnly: return lv == 0 ? 1.0 : 0.0;
      case WeightScheme::TopOnly: return lv == k - 1 ? 1.0 : 0.0;
      case WeightScheme::Equal: return 1.0;
      case WeightScheme::Hierarchical:
        // precondition below restricts levels to {0,1,2}
        return lv == 2 ? 100.0 : (lv == 1 ? 10.0 : 1.0);
      case WeightScheme::Custom: {
        auto it = custom.find(lv);
        if (it == custom.end())
          throw std::invalid_argument("custom scheme misses edge level " + std::to_string(lv));
        if (it->second < 0.0)
          throw std::invalid_argument("custom scheme has negative weight at level " +
                                      std::to_string(lv));
        return it->second;
      }
    }
    return 0.0;
  };

  if (scheme == WeightScheme::Hierarchical) {
    const auto lvls = edge_levels();
    if (lvls != std::vector<int>{0, 1, 2})
      throw std::invalid_argument("hierarchical scheme needs a tree with exactly 3 edge levels");
  }

  LabelTree out(*this);
  for (int i = 0; i < out.node_count(); ++i) {
    if (i == out.root_) continue;
    const double w = weight_for_level(out.levels_[i]);
    out.node_weight_[i] = w;
    out.nodes_[i].edge_weight = w;
  }
  out.weights_assigned_ = true;
  return out;
}

DistanceMatrix LabelTree::ground_distance() const {
  if (!weights_assigned_)
    throw std::logic_error("ground_distance requires assigned edge weights");
  const int c = leaf_count();
  DistanceMatrix m;
  m.leaves = c;
  m.d.assign(static_cast<std::size_t>(c) * c, 0.0);

  // Distance from each leaf to every node, walking the undirected tree.
  const int n = node_count();
  std::vector<double> dist(n);
  std::vector<int> stack;
  for (int a = 0; a < c; ++a) {
    const int start = leaf_nodes_[a];
    std::vector<char> seen(n, 0);
    dist[start] = 0.0;
    seen[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      const int p = parents_[v];
      if (p >= 0 && !seen[p]) {
        seen[p] = 1;
        dist[p] = dist[v] + node_weight_[v];
        stack.push_back(p);
      }
      for (int ch : children_[v]) {
        if (!seen[ch]) {
          seen[ch] = 1;
          dist[ch] = dist[v] + node_weight_[ch];
          stack.push_back(ch);
        }
      }
    }
    for (int b = 0; b < c; ++b) m.at(a, b) = dist[leaf_nodes_[b]];
  }
  // Make symmetry exact regardless of traversal round-off.
  for (int a = 0; a < c; ++a) {
    m.at(a, a) = 0.0;
    for (int b = a + 1; b < c; ++b) {
      const double v = 0.5 * (m.at(a, b) + m.at(b, a));
      m.at(a, b) = v;
      m.at(b, a) = v;
    }
  }
  return m;
}

std::vector<double> LabelTree::aggregate_leaf_values(std::span<const double> leaf_values) const {
  if (static_cast<int>(leaf_values.size()) != leaf_count())
    throw std::invalid_argument("leaf value vector has wrong length");
  std::vector<double> out(node_count(), 0.0);
  for (int s = 0; s < leaf_count(); ++s) out[leaf_nodes_[s]] = leaf_values[s];
  for (int v : topo_)
    for (int c : children_[v]) out[v] += out[c];
  return out;
}

std::vector<int> LabelTree::level_cut(int k) const {
  if (k < 0 || k >= depth())
    throw std::invalid_argument("level " + std::to_string(k) + " outside [0, " +
                                std::to_string(depth() - 1) + "]");
  std::vector<int> cut;
  for (int i = 0; i < node_count(); ++i) {
    if (i == root_) continue;
    if (levels_[i] <= k && levels_[parents_[i]] > k) cut.push_back(i);
  }
  return cut;  // nodes_ is id-sorted, so the cut is too
}

int LabelTree::ancestor_at_level(int leaf_slot, int k) const {
  if (leaf_slot < 0 || leaf_slot >= leaf_count())
    throw std::invalid_argument("leaf slot out of range");
  int v = leaf_nodes_[leaf_slot];
  while (parents_[v] >= 0 && levels_[parents_[v]] <= k) v = parents_[v];
  if (levels_[v] > k) throw std::logic_error("no cut ancestor; invalid level");
  return v;
}

std::vector<double> AdjacencyOperator::apply(std::span<const double> node_values) const {
  const LabelTree& t = *tree_;
  if (static_cast<int>(node_values.size()) != t.node_count())
    throw std::invalid_argument("node value vector has wrong length");
  std::vector<double> out(t.node_count(), 0.0);
  for (int v = 0; v < t.node_count(); ++v)
    for (int c : t.children(v)) out[v] += node_values[c];
  return out;
}

std::string distance_matrix_csv(const LabelTree& tree, const DistanceMatrix& m) {
  std::ostringstream out;
  out << "leaf";
  for (int i = 0; i < m.leaves; ++i) out << ',' << tree.node(tree.leaf_order()[i]).name;
  out << '\n';
  out.precision(17);
  for (int i = 0; i < m.leaves; ++i) {
    out << tree.node(tree.leaf_order()[i]).name;
    for (int j = 0; j < m.leaves; ++j) out << ',' << m.at(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace treeloss
