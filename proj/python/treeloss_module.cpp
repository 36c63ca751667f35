// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "treeloss/datagen.hpp"
#include "treeloss/evaluation.hpp"
#include "treeloss/losses.hpp"
#include "treeloss/transport.hpp"
#include "treeloss/tree.hpp"
#include "treeloss/version.hpp"

namespace py = pybind11;
using namespace treeloss;

namespace {

LossConfig make_loss_config(const std::string& loss, const std::string& scheme, double alpha,
                            double beta) {
  LossConfig cfg;
  cfg.kind = loss_from_name(loss);
  cfg.scheme = scheme_from_name(scheme);
  cfg.alpha = alpha;
  cfg.beta = beta;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tree-based semantic losses: label hierarchies, exact transport, "
            "loss kernels and gradients";
  m.attr("__version__") = kVersion;

  py::class_<LabelTree>(m, "LabelTree")
      .def_static("from_json", &LabelTree::from_json, py::arg("text"))
      .def_static("load", &LabelTree::load, py::arg("path"))
      .def("to_json", &LabelTree::to_json)
      .def("save", &LabelTree::save, py::arg("path"))
      .def_property_readonly("leaves", &LabelTree::leaf_count)
      .def_property_readonly("nodes", &LabelTree::node_count)
      .def_property_readonly("depth", &LabelTree::depth)
      .def_property_readonly("weights_assigned", &LabelTree::weights_assigned)
      .def("leaf_names",
           [](const LabelTree& t) {
             std::vector<std::string> names;
             for (int idx : t.leaf_order()) names.push_back(t.node(idx).name);
             return names;
           })
      .def("node_levels",
           [](const LabelTree& t) {
             std::map<int, int> levels;
             for (int i = 0; i < t.node_count(); ++i) levels[t.node(i).id] = t.level(i);
             return levels;
           })
      .def(
          "with_weights",
          [](const LabelTree& t, const std::string& scheme, const std::map<int, double>& custom) {
            return t.with_weights(scheme_from_name(scheme), custom);
          },
          py::arg("scheme"), py::arg("custom") = std::map<int, double>{})
      .def("ground_distance",
           [](const LabelTree& t) {
             const auto m = t.ground_distance();
             std::vector<std::vector<double>> rows(m.leaves, std::vector<double>(m.leaves));
             for (int i = 0; i < m.leaves; ++i)
               for (int j = 0; j < m.leaves; ++j) rows[i][j] = m.at(i, j);
             return rows;
           })
      .def("__repr__", [](const LabelTree& t) {
        return "<treeloss.LabelTree leaves=" + std::to_string(t.leaf_count()) +
               " depth=" + std::to_string(t.depth()) + ">";
      });

  m.def(
      "gen_tree",
      [](int tops, int mids, int leaves) {
        GenSpec spec;
        spec.tops = tops;
        spec.mids = mids;
        spec.leaves = leaves;
        return gen_tree(spec);
      },
      py::arg("tops") = 4, py::arg("mids") = 3, py::arg("leaves") = 2);

  m.def("softmax",
        [](const std::vector<double>& z) { return softmax(z); });
  m.def(
      "cross_entropy",
      [](const std::vector<double>& p, int hot) { return cross_entropy(p, hot); },
      py::arg("p"), py::arg("target"));
  m.def(
      "aggregate",
      [](const LabelTree& t, const std::vector<double>& p) { return aggregate(p, t); },
      py::arg("tree"), py::arg("p"));
  m.def(
      "tree_ce",
      [](const LabelTree& t, const std::vector<double>& p, int hot) {
        return tree_ce(p, hot, t);
      },
      py::arg("tree"), py::arg("p"), py::arg("target"));
  m.def(
      "wasserstein_ce",
      [](const LabelTree& t, const std::vector<double>& p, int hot, double alpha, double beta) {
        return wasserstein_ce(p, hot, t.ground_distance(), alpha, beta);
      },
      py::arg("tree"), py::arg("p"), py::arg("target"), py::arg("alpha") = 0.5,
      py::arg("beta") = 0.5);
  m.def(
      "wasserstein_crisp",
      [](const LabelTree& t, const std::vector<double>& p, int hot) {
        return wasserstein_crisp(p, hot, t.ground_distance());
      },
      py::arg("tree"), py::arg("p"), py::arg("target"));
  m.def(
      "wasserstein_tree",
      [](const LabelTree& t, const std::vector<double>& p, const std::vector<double>& q) {
        return wasserstein_tree(p, q, t);
      },
      py::arg("tree"), py::arg("p"), py::arg("q"));
  m.def(
      "wasserstein_lp",
      [](const LabelTree& t, const std::vector<double>& p, const std::vector<double>& q) {
        return wasserstein_lp(p, q, t.ground_distance()).cost;
      },
      py::arg("tree"), py::arg("p"), py::arg("q"));
  m.def(
      "loss_gradient",
      [](const LabelTree& t, const std::vector<double>& logits, int hot, const std::string& loss,
         const std::string& scheme, double alpha, double beta) {
        const LossConfig cfg = make_loss_config(loss, scheme, alpha, beta);
        const LossContext ctx = LossContext::make(t, cfg);
        return loss_gradient(logits, hot, cfg, ctx);
      },
      py::arg("tree"), py::arg("logits"), py::arg("target"), py::arg("loss") = "ce",
      py::arg("scheme") = "leaf", py::arg("alpha") = 0.5, py::arg("beta") = 0.5);
  m.def(
      "decide",
      [](const std::vector<double>& scores, double tau) { return decide(scores, tau); },
      py::arg("scores"), py::arg("tau"));
  m.def(
      "paired_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto res = paired_t_test(a, b);
        return py::make_tuple(res.t, res.p);
      },
      py::arg("a"), py::arg("b"));
}
