"""Global mapper: temporal nodes, grid pruning, edge sparsification and robust PGO."""

from .marginals import marginal_covariances
from .metrics import metric_arps, metric_t_rel
from .optimizer import OptimizeResult, graph_cost, information_matrix, optimize, selected_components
from .pruning import GridIndex, PruneReport, WeightMode, eliminate_node, node_weight, prune_cells
from .sparsify import UnionFind, chow_liu_sparsify, max_spanning_forest
from .temporal import make_temporal_node, register_all

__all__ = [
    "GridIndex",
    "OptimizeResult",
    "PruneReport",
    "UnionFind",
    "WeightMode",
    "chow_liu_sparsify",
    "eliminate_node",
    "graph_cost",
    "information_matrix",
    "make_temporal_node",
    "marginal_covariances",
    "max_spanning_forest",
    "metric_arps",
    "metric_t_rel",
    "node_weight",
    "optimize",
    "prune_cells",
    "register_all",
    "selected_components",
]
