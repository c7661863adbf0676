"""Pose-graph data model, information heuristics and zero-constraints."""

from __future__ import annotations

import copy
import enum
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np

from .errors import LeanmapError, UnknownNodeError
from .geometry import Pose2D, inverse_compose, inverse_covariance, symmetrize

log = logging.getLogger(__name__)

# information-heuristic policy constants
WELL_CONDITIONED_EIG = 1e-9
W_MAX = 1e12
ZERO_CONSTRAINT_EPS = 1e-12


class NodeSource(str, enum.Enum):
    WHEEL_IMU = "wheel_imu"
    VISUAL = "visual"
    LIDAR = "lidar"
    SYNTHETIC = "synthetic"


class NodeStatus(str, enum.Enum):
    UNREGISTERED = "unregistered"
    OPTIMIZED = "optimized"
    TEMPORAL = "temporal"
    PRUNED = "pruned"


class EdgeKind(str, enum.Enum):
    ODOMETRY = "odometry"
    LOOP_VISUAL = "loop_visual"
    LOOP_LIDAR = "loop_lidar"
    ZERO_CONSTRAINT = "zero_constraint"
    # produced by node elimination from at least one non-odometry edge
    DERIVED = "derived"

    @property
    def is_loop(self) -> bool:
        return self in (EdgeKind.LOOP_VISUAL, EdgeKind.LOOP_LIDAR, EdgeKind.DERIVED)


@dataclass(frozen=True)
class Huber:
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("Huber delta must be positive")


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    information: np.ndarray
    measurement: Pose2D


@dataclass(frozen=True)
class MaxMixture:
    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("max-mixture needs at least one component")
        for c in self.components:
            if not c.weight > 0:
                raise ValueError("mixture weights must be positive")

    @classmethod
    def null_hypothesis(cls, measurement: Pose2D, information, null_weight: float = 0.1,
                        null_scale: float = 1e-12) -> MaxMixture:
        """Measurement component plus a near-flat outlier hypothesis."""
        info = np.asarray(information, dtype=float)
        return cls((
            MixtureComponent(1.0 - null_weight, info, measurement),
            MixtureComponent(null_weight, info * null_scale, measurement),
        ))


Kernel = Huber | MaxMixture | None


@dataclass
class FrameNode:
    id: int
    pose: Pose2D
    cov: np.ndarray
    source: NodeSource = NodeSource.SYNTHETIC
    status: NodeStatus = NodeStatus.UNREGISTERED

    @property
    def live(self) -> bool:
        return self.status is not NodeStatus.PRUNED


@dataclass
class Edge:
    src: int
    dst: int
    kind: EdgeKind
    measurement: Pose2D
    information: np.ndarray
    kernel: Kernel = None
    # covariance matching ``information``; filled lazily unless supplied
    cov_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"self-loop edge on node {self.src}")
        self.information = symmetrize(np.asarray(self.information, dtype=float))
        if self.information.shape != (3, 3):
            raise ValueError("edge information must be 3x3")
        if self.kind is EdgeKind.ZERO_CONSTRAINT and not self.measurement.is_identity():
            raise ValueError("zero-constraint edges must carry the identity measurement")

    def other(self, node_id: int) -> int:
        return self.dst if node_id == self.src else self.src

    @property
    def covariance(self) -> np.ndarray:
        if self.cov_cache is None:
            self.cov_cache = information_to_covariance(self.information)
        return self.cov_cache

    def oriented_from(self, node_id: int) -> tuple[Pose2D, np.ndarray]:
        """Measurement and covariance as seen from ``node_id`` towards the other end."""
        cov = self.covariance
        if node_id == self.src:
            return self.measurement, cov
        if node_id == self.dst:
            return self.measurement.inverse(), inverse_covariance(self.measurement, cov)
        raise ValueError(f"node {node_id} is not an endpoint of this edge")


def mutual_information(cov) -> float:
    """Information heuristic for a covariance.

    Frobenius norm of the inverse when the covariance is well conditioned,
    otherwise ``|1/det|``; both branches are clamped to ``W_MAX``.
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    eig = np.linalg.eigvalsh(cov)
    if eig[0] > WELL_CONDITIONED_EIG:
        return float(min(np.linalg.norm(np.linalg.inv(cov), "fro"), W_MAX))
    det = float(np.prod(eig))
    if det == 0.0 or not np.isfinite(det):
        return W_MAX
    return float(min(abs(1.0 / det), W_MAX))


def information_weights(infos) -> np.ndarray:
    """:func:`mutual_information` evaluated from a stack of information matrices.

    Avoids inverting: the covariance eigenvalues are the reciprocals of the
    information eigenvalues, so the Frobenius branch is the norm of the
    information and the degenerate branch is its determinant.
    """
    return _weights_from_eigenvalues(np.linalg.eigvalsh(symmetrize(np.asarray(infos, dtype=float))))


def _weights_from_eigenvalues(eig: np.ndarray) -> np.ndarray:
    # ``eig`` ascending eigenvalues of information matrices
    fro = np.sqrt(np.sum(eig**2, axis=-1))
    det = np.abs(np.prod(eig, axis=-1))
    return np.minimum(np.where(eig[..., -1] < 1.0 / WELL_CONDITIONED_EIG, fro, det), W_MAX)


def information_weight(info) -> float:
    return float(information_weights(np.asarray(info, dtype=float)[None])[0])


def _clamped_inverse(m) -> np.ndarray:
    eig, vec = np.linalg.eigh(symmetrize(np.asarray(m, dtype=float)))
    eig = np.maximum(eig, 1.0 / W_MAX)
    return symmetrize((vec / eig[..., None, :]) @ np.swapaxes(vec, -1, -2))


def covariance_to_information_weighted(cov) -> tuple[np.ndarray, np.ndarray]:
    """Clamped inverse of a covariance stack plus the information weight of each result."""
    eig, vec = np.linalg.eigh(symmetrize(np.asarray(cov, dtype=float)))
    eig = np.maximum(eig, 1.0 / W_MAX)
    info = symmetrize((vec / eig[..., None, :]) @ np.swapaxes(vec, -1, -2))
    return info, _weights_from_eigenvalues(np.flip(1.0 / eig, axis=-1))


def covariance_to_information(cov) -> np.ndarray:
    """Invert a covariance (or a stack), clamping so the result stays below ``W_MAX``."""
    return _clamped_inverse(cov)


def information_to_covariance(info) -> np.ndarray:
    """Invert an information matrix (or a stack); unobserved directions get variance ``W_MAX``."""
    return _clamped_inverse(info)


def repair_information(info, floor: float = 1e-9) -> np.ndarray:
    """Clamp eigenvalues of a marginally indefinite information matrix at ``floor``."""
    info = symmetrize(np.asarray(info, dtype=float))
    eig, vec = np.linalg.eigh(info)
    if eig[0] >= 0.0:
        return info
    log.warning("information matrix not PSD (min eigenvalue %.3g); clamping at %g", eig[0], floor)
    eig = np.maximum(eig, floor)
    return symmetrize((vec * eig) @ vec.T)


def zero_constraint_information() -> np.ndarray:
    return mutual_information(ZERO_CONSTRAINT_EPS * np.eye(3)) * np.eye(3)


class PoseGraph:
    """Multigraph of frame nodes and relative-pose edges.

    Node ids increase monotonically and are never reused. Edge ids are
    stable too, so removing an edge does not renumber the others.
    """

    def __init__(self):
        self.nodes: dict[int, FrameNode] = {}
        self.edges: dict[int, Edge] = {}
        self.adjacency: dict[int, list[int]] = {}
        self._next_node = 0
        self._next_edge = 0
        self.version = 0

    # -- construction -----------------------------------------------------

    def add_node(self, pose: Pose2D, cov=None, source: NodeSource = NodeSource.SYNTHETIC,
                 node_id: int | None = None, status: NodeStatus = NodeStatus.UNREGISTERED) -> int:
        if node_id is None:
            node_id = self._next_node
        elif node_id in self.nodes or node_id < self._next_node:
            raise LeanmapError(f"node id {node_id} is not fresh")
        cov = np.zeros((3, 3)) if cov is None else symmetrize(np.asarray(cov, dtype=float))
        self.nodes[node_id] = FrameNode(node_id, pose, cov, NodeSource(source), status)
        self.adjacency[node_id] = []
        self._next_node = node_id + 1
        self.version += 1
        return node_id

    def _require_live(self, node_id: int) -> FrameNode:
        node = self.nodes.get(node_id)
        if node is None or not node.live:
            raise UnknownNodeError(node_id)
        return node

    def add_edge(self, edge: Edge) -> int:
        self._require_live(edge.src)
        self._require_live(edge.dst)
        eid = self._next_edge
        self._next_edge += 1
        self.edges[eid] = edge
        self.adjacency[edge.src].append(eid)
        self.adjacency[edge.dst].append(eid)
        self.version += 1
        return eid

    def add_zero_constraint(self, a: int, b: int) -> int:
        """Tie two synchronized frames with an identity, near-rigid edge."""
        edge = Edge(a, b, EdgeKind.ZERO_CONSTRAINT, Pose2D.identity(), zero_constraint_information())
        return self.add_edge(edge)

    def remove_edge(self, eid: int) -> Edge:
        edge = self.edges.pop(eid)
        self.adjacency[edge.src].remove(eid)
        self.adjacency[edge.dst].remove(eid)
        self.version += 1
        return edge

    def prune_node(self, node_id: int) -> list[Edge]:
        """Mark a node pruned and drop its incident edges."""
        self._require_live(node_id)
        removed = [self.remove_edge(eid) for eid in list(self.adjacency[node_id])]
        self.nodes[node_id].status = NodeStatus.PRUNED
        self.version += 1
        return removed

    # -- queries ----------------------------------------------------------

    def __len__(self):
        return self.num_nodes

    @property
    def num_nodes(self) -> int:
        return sum(1 for n in self.nodes.values() if n.live)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def live_nodes(self) -> Iterator[FrameNode]:
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.live:
                yield node

    def live_ids(self) -> list[int]:
        return [n.id for n in self.live_nodes()]

    def nodes_with_status(self, *statuses: NodeStatus) -> list[int]:
        return sorted(nid for nid, n in self.nodes.items() if n.status in statuses)

    def degree(self, node_id: int) -> int:
        return len(self.adjacency[node_id])

    def incident(self, node_id: int) -> list[tuple[int, Edge]]:
        return [(eid, self.edges[eid]) for eid in self.adjacency[node_id]]

    def neighbors(self, node_id: int) -> list[int]:
        return sorted({self.edges[eid].other(node_id) for eid in self.adjacency[node_id]})

    def edge_mutual_information(self, eid: int) -> float:
        return information_weight(self.edges[eid].information)

    def submap_nodes(self, center: Pose2D, side: float) -> list[int]:
        """Live nodes inside the axis-aligned square of ``side`` around ``center``."""
        if not side > 0:
            raise ValueError("submap side must be positive")
        half = 0.5 * side
        return [
            n.id
            for n in self.live_nodes()
            if abs(n.pose.x - center.x) <= half and abs(n.pose.y - center.y) <= half
        ]

    def relative_pose(self, a: int, b: int) -> Pose2D:
        return inverse_compose(self.nodes[a].pose, self.nodes[b].pose)

    def connected_components(self, edge_filter=None) -> list[list[int]]:
        """Components over live nodes using the edges accepted by ``edge_filter``."""
        parent = {nid: nid for nid in self.live_ids()}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for edge in self.edges.values():
            if edge_filter is None or edge_filter(edge):
                ra, rb = find(edge.src), find(edge.dst)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for nid in parent:
            groups.setdefault(find(nid), []).append(nid)
        return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])

    def recompute_adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for eid in sorted(self.edges):
            e = self.edges[eid]
            adj[e.src].append(eid)
            adj[e.dst].append(eid)
        return adj

    def check_invariants(self) -> None:
        """Raise AssertionError when the incremental bookkeeping has drifted."""
        fresh = self.recompute_adjacency()
        for nid in self.nodes:
            assert sorted(self.adjacency[nid]) == sorted(fresh[nid]), f"adjacency drift at {nid}"
        assert sum(len(v) for v in self.adjacency.values()) == 2 * len(self.edges)
        for e in self.edges.values():
            assert self.nodes[e.src].live and self.nodes[e.dst].live, "edge touches a pruned node"

    def poses(self, ids: Iterable[int] | None = None) -> dict[int, Pose2D]:
        ids = self.live_ids() if ids is None else ids
        return {i: self.nodes[i].pose for i in ids}

    def copy(self) -> PoseGraph:
        """Independent deep copy, used as an immutable snapshot by readers."""
        return copy.deepcopy(self)

    def snapshot(self) -> PoseGraph:
        return self.copy()

    def subgraph(self, ids: Iterable[int]) -> PoseGraph:
        """Copy of the given live nodes and the edges among them; ids are kept."""
        keep = sorted(set(ids))
        sub = PoseGraph()
        for nid in keep:
            n = self._require_live(nid)
            sub.add_node(n.pose, n.cov.copy(), n.source, node_id=nid, status=n.status)
        kept = set(keep)
        for eid in sorted(self.edges):
            e = self.edges[eid]
            if e.src in kept and e.dst in kept:
                sub.add_edge(e)
        sub.version = self.version
        return sub
