# SPDX-License-Identifier: Apache-2.0
"""Tree-based semantic losses over label hierarchies.

Thin python surface over the C++ core: label trees, tree-metric ground
distances, exact optimal transport, the loss kernels and their gradients, and
the confidence-threshold OOD decision rule.
"""

from ._core import (
    LabelTree,
    __version__,
    aggregate,
    cross_entropy,
    decide,
    gen_tree,
    loss_gradient,
    paired_t_test,
    softmax,
    tree_ce,
    wasserstein_ce,
    wasserstein_crisp,
    wasserstein_lp,
    wasserstein_tree,
)

__all__ = [
    "LabelTree",
    "__version__",
    "aggregate",
    "cross_entropy",
    "decide",
    "gen_tree",
    "loss_gradient",
    "paired_t_test",
    "softmax",
    "tree_ce",
    "wasserstein_ce",
    "wasserstein_crisp",
    "wasserstein_lp",
    "wasserstein_tree",
]
