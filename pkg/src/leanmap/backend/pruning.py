"""Grid-cell node pruning.

Each occupied grid cell keeps its highest-weight node.  Weights mix an
information term (node marginal information, or the information of the
node's incident edges) with a geometric term (squared distances to the
nodes of the surrounding 3x3 cell block).  Eliminated nodes are replaced
by edges composed through them between their neighbors; those new edges
are reduced on the spot to a maximum-information spanning tree.
"""

from __future__ import annotations

import enum
import functools
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (
    Pose2D,
    compose_arrays,
    compound_covariance,
    compound_covariance_arrays,
    inverse_arrays,
    inverse_covariance_arrays,
)
from ..graph import (
    Edge,
    EdgeKind,
    PoseGraph,
    covariance_to_information,
    covariance_to_information_weighted,
    information_to_covariance,
    information_weights,
    zero_constraint_information,
)
from .marginals import marginal_covariances
from .sparsify import max_spanning_forest


class WeightMode(str, enum.Enum):
    NODE_INFO = "node_info"
    EDGE_INFO = "edge_info"

    @classmethod
    def parse(cls, value) -> WeightMode:
        if isinstance(value, WeightMode):
            return value
        aliases = {"node": cls.NODE_INFO, "edge": cls.EDGE_INFO}
        return aliases.get(value) or cls(value)


class GridIndex:
    """Spatial hash of live node positions into square cells."""

    def __init__(self, cell_size: float):
        if not cell_size > 0:
            raise ValueError("cell size must be positive")
        self.cell_size = float(cell_size)
        self.cells: dict[tuple[int, int], list[int]] = defaultdict(list)
        self.cell_of: dict[int, tuple[int, int]] = {}
        self._xy: dict[int, tuple[float, float]] = {}

    @classmethod
    def from_graph(cls, graph: PoseGraph, cell_size: float) -> GridIndex:
        grid = cls(cell_size)
        for node in graph.live_nodes():
            grid.insert(node.id, node.pose.x, node.pose.y)
        return grid

    def key(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.cell_size), math.floor(y / self.cell_size))

    def insert(self, node_id: int, x: float, y: float) -> None:
        k = self.key(x, y)
        self.cells[k].append(node_id)
        self.cell_of[node_id] = k
        self._xy[node_id] = (x, y)

    def remove(self, node_id: int) -> None:
        k = self.cell_of.pop(node_id)
        self.cells[k].remove(node_id)
        if not self.cells[k]:
            del self.cells[k]
        del self._xy[node_id]

    def block(self, key: tuple[int, int]) -> list[int]:
        """Ids in the 3x3 block of cells centered on ``key``."""
        cx, cy = key
        out = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                out.extend(self.cells.get((cx + dx, cy + dy), ()))
        return out

    def neighbors(self, node_id: int) -> list[int]:
        return sorted(i for i in self.block(self.cell_of[node_id]) if i != node_id)

    def position(self, node_id: int) -> tuple[float, float]:
        return self._xy[node_id]

    @property
    def occupied(self) -> int:
        return len(self.cells)

    def npc(self) -> float:
        """Average number of nodes per occupied cell."""
        return 0.0 if not self.cells else len(self._xy) / len(self.cells)

    def max_per_cell(self) -> int:
        return max((len(v) for v in self.cells.values()), default=0)


@dataclass
class PruneReport:
    nodes_before: int
    nodes_after: int
    edges_before: int
    edges_after: int
    eliminated: list[int] = field(default_factory=list)
    npc: float = 0.0
    elapsed_ms: float = 0.0
    # pairwise edges generated before the local tree reduction
    edges_generated: int = 0
    # largest net edge increase caused by one elimination, before reduction
    max_net_increase: int = 0


def geometric_weight(grid: GridIndex, node_id: int) -> float:
    others = grid.neighbors(node_id)
    if not others:
        return 0.0
    x, y = grid.position(node_id)
    pts = np.array([grid.position(o) for o in others])
    return float(np.sum((pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2))


def node_weight(graph: PoseGraph, grid: GridIndex, node_id: int, s: float = 0.5,
                mode: WeightMode | str = WeightMode.EDGE_INFO) -> float:
    """Pruning weight of one node.

    ``node_info``: ``s * tr(inv(cov)) + (1 - s) * sum d_i^2`` using the
    node's stored covariance, inverted with the information clamp.
    ``edge_info``: ``s * sum_k tr(info_k) + (1 - s) * sum d_i^2`` over the
    incident edges; no matrix inversion is involved.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    mode = WeightMode.parse(mode)
    if mode is WeightMode.EDGE_INFO:
        info = sum(float(e.information.trace()) for _, e in graph.incident(node_id))
    else:
        info = float(np.trace(covariance_to_information(graph.nodes[node_id].cov)))
    geo = geometric_weight(grid, node_id) if s < 1.0 else 0.0
    return s * info + (1.0 - s) * geo


def _representative_edges(graph: PoseGraph, node_id: int) -> dict[int, tuple[int, Edge]]:
    """One edge per distinct neighbor: odometry first, then most informative, then lowest id."""
    by_neighbor: dict[int, list[tuple[int, Edge]]] = defaultdict(list)
    for eid, e in graph.incident(node_id):
        by_neighbor[e.other(node_id)].append((eid, e))
    out = {}
    for n, group in by_neighbor.items():
        if len(group) == 1:
            out[n] = group[0]
            continue
        weights = information_weights(np.array([e.information for _, e in group]))
        keys = [(e.kind is not EdgeKind.ODOMETRY, -float(w), eid) for (eid, e), w in zip(group, weights)]
        out[n] = group[min(range(len(group)), key=keys.__getitem__)]
    return out


@functools.lru_cache(maxsize=64)
def _pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(m, 1)


def _composed_kind(k1: EdgeKind, k2: EdgeKind) -> EdgeKind:
    if k1 is EdgeKind.ODOMETRY and k2 is EdgeKind.ODOMETRY:
        return EdgeKind.ODOMETRY
    if k1 is EdgeKind.ZERO_CONSTRAINT and k2 is EdgeKind.ZERO_CONSTRAINT:
        return EdgeKind.ZERO_CONSTRAINT
    return EdgeKind.DERIVED


def eliminate_node(graph: PoseGraph, node_id: int, local_tree: bool = True) -> tuple[int, int, int]:
    """Remove a node, bridging its neighbors with composed edges.

    For neighbors ``a < c`` of the eliminated node ``b`` the new edge
    carries ``z_ab ⊕ z_bc`` with the compounded covariance.  With
    ``local_tree`` only a maximum-information spanning tree of the new
    edges is kept (odometry-chain edges always are).  Returns the number
    of pairwise edges generated, the number actually added, and the
    eliminated node's degree.
    """
    reps = _representative_edges(graph, node_id)
    n_incident = graph.degree(node_id)
    around = sorted(reps)
    graph.prune_node(node_id)
    m = len(around)
    if m < 2:
        return 0, 0, n_incident

    edges = [reps[n][1] for n in around]
    kinds = [e.kind for e in edges]
    raw = np.array([e.measurement.as_array() for e in edges])
    raw_cov = np.array([e.covariance for e in edges])
    inv = inverse_arrays(raw)
    inv_cov = inverse_covariance_arrays(raw, raw_cov)
    # out: eliminated node -> neighbor; back: neighbor -> eliminated node
    flip = np.array([e.dst == node_id for e in edges])[:, None]
    out_z, back_z = np.where(flip, inv, raw), np.where(flip, raw, inv)
    out_cov = np.where(flip[..., None], inv_cov, raw_cov)
    back_cov = np.where(flip[..., None], raw_cov, inv_cov)

    ia, ic = _pairs(m)
    z_ab, cov_ab = back_z[ia], back_cov[ia]
    z_ac = compose_arrays(z_ab, out_z[ic])
    cov_ac = compound_covariance_arrays(z_ab, cov_ab, out_z[ic], out_cov[ic])
    info_ac, weights = covariance_to_information_weighted(cov_ac)
    pair_kinds = [_composed_kind(kinds[a], kinds[c]) for a, c in zip(ia, ic)]
    zero = [k for k, kind in enumerate(pair_kinds) if kind is EdgeKind.ZERO_CONSTRAINT]
    if zero:
        z_ac[zero] = 0.0
        info_ac[zero] = zero_constraint_information()
        cov_ac[zero] = information_to_covariance(zero_constraint_information())
        weights[zero] = information_weights(info_ac[zero])
    generated = len(pair_kinds)

    keep = range(generated)
    if local_tree:
        forced = [(around[ia[k]], around[ic[k]]) for k in range(generated) if pair_kinds[k] is EdgeKind.ODOMETRY]
        candidates = [
            (float(weights[k]), k, around[ia[k]], around[ic[k]])
            for k in range(generated)
            if pair_kinds[k] is not EdgeKind.ODOMETRY
        ]
        chosen = set(max_spanning_forest(candidates, forced))
        keep = [k for k in range(generated) if pair_kinds[k] is EdgeKind.ODOMETRY or k in chosen]
    added = 0
    for k in keep:
        graph.add_edge(Edge(around[ia[k]], around[ic[k]], pair_kinds[k], Pose2D.from_array(z_ac[k]), info_ac[k],
                            cov_cache=cov_ac[k]))
        added += 1
    return generated, added, n_incident


def update_covariances(graph: PoseGraph) -> None:
    """Re-propagate covariances of live nodes along their strongest odometry edge.

    Nodes are visited in id order; the first live node keeps its
    covariance and every other node with an odometry edge to a smaller
    live id gets the compound of that predecessor's covariance with the
    edge covariance.
    """
    ids = graph.live_ids()
    odo = [eid for eid in sorted(graph.edges) if graph.edges[eid].kind is EdgeKind.ODOMETRY]
    strength = {}
    if odo:
        ws = information_weights(np.array([graph.edges[eid].information for eid in odo]))
        strength = dict(zip(odo, ws.tolist()))
    for nid in ids[1:]:
        best = None
        for eid, e in graph.incident(nid):
            other = e.other(nid)
            if e.kind is EdgeKind.ODOMETRY and other < nid:
                key = (-strength[eid], eid)
                if best is None or key < best[0]:
                    best = (key, other, e)
        if best is None:
            continue
        _, prev, e = best
        z, cov = e.oriented_from(prev)
        p = graph.nodes[prev]
        graph.nodes[nid].cov = compound_covariance(p.pose, p.cov, z, cov)


def _cache_edge_covariances(graph: PoseGraph) -> None:
    # one batched inversion instead of one per edge during elimination
    pending = [e for e in graph.edges.values() if e.cov_cache is None]
    if pending:
        covs = information_to_covariance(np.array([e.information for e in pending]))
        for e, cov in zip(pending, covs):
            e.cov_cache = cov


def select_survivors(graph: PoseGraph, grid: GridIndex, s: float,
                     mode: WeightMode) -> tuple[list[int], dict[int, float]]:
    """Ids to eliminate (ascending) and the weights that decided it."""
    weights: dict[int, float] = {}
    eliminated: list[int] = []
    for key in sorted(grid.cells):
        members = grid.cells[key]
        if len(members) < 2:
            continue
        scored = []
        for nid in members:
            w = node_weight(graph, grid, nid, s, mode)
            weights[nid] = w
            scored.append((-w, nid))
        scored.sort()
        eliminated.extend(nid for _, nid in scored[1:])
    return sorted(eliminated), weights


def prune_cells(graph: PoseGraph, grid: GridIndex | float, s: float = 0.5,
                mode: WeightMode | str = WeightMode.EDGE_INFO,
                local_tree: bool = True) -> PruneReport:
    """Keep the highest-weight node of every occupied cell, eliminate the rest.

    ``grid`` may be a prebuilt :class:`GridIndex` or a cell size.  In
    ``node_info`` mode the stored node covariances are first refreshed with
    the marginals recovered from the current information matrix.
    """
    t0 = time.perf_counter()
    mode = WeightMode.parse(mode)
    if not isinstance(grid, GridIndex):
        grid = GridIndex.from_graph(graph, grid)
    nodes_before, edges_before = graph.num_nodes, graph.num_edges

    if mode is WeightMode.NODE_INFO and any(len(v) > 1 for v in grid.cells.values()):
        for nid, cov in marginal_covariances(graph).items():
            graph.nodes[nid].cov = cov

    eliminated, _ = select_survivors(graph, grid, s, mode)
    _cache_edge_covariances(graph)
    generated_total = 0
    net = []
    for nid in eliminated:
        generated, _, n_incident = eliminate_node(graph, nid, local_tree)
        generated_total += generated
        net.append(generated - n_incident)
        grid.remove(nid)
    if eliminated:
        update_covariances(graph)

    return PruneReport(
        nodes_before=nodes_before,
        nodes_after=graph.num_nodes,
        edges_before=edges_before,
        edges_after=graph.num_edges,
        eliminated=eliminated,
        npc=grid.npc(),
        elapsed_ms=(time.perf_counter() - t0) * 1e3,
        edges_generated=generated_total,
        max_net_increase=max(net, default=0),
    )
