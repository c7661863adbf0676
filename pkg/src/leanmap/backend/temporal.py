"""Temporal-node generation for the sliding window of unregistered frames."""

from __future__ import annotations

import numpy as np

from ..errors import InsufficientWindowError
from ..geometry import Pose2D, compose, compound_covariance
from ..graph import EdgeKind, NodeStatus, PoseGraph

_REGISTERED = (NodeStatus.OPTIMIZED, NodeStatus.TEMPORAL)


def _previous_registered(graph: PoseGraph, node_id: int) -> int | None:
    for nid in range(node_id - 1, -1, -1):
        node = graph.nodes.get(nid)
        if node is not None and node.status in _REGISTERED:
            return nid
    return None


def _odometry_between(graph: PoseGraph, a: int, b: int):
    """Measurement/covariance of the strongest odometry edge from ``a`` to ``b``, if any."""
    best = None
    for eid, e in graph.incident(a):
        if e.kind is EdgeKind.ODOMETRY and e.other(a) == b:
            key = (-float(np.trace(e.information)), eid)
            if best is None or key < best[0]:
                best = (key, e)
    if best is None:
        return None
    return best[1].oriented_from(a)


def make_temporal_node(graph: PoseGraph, window: int, delta: Pose2D | None = None,
                       delta_cov=None) -> int:
    """Register the oldest unregistered frame as the temporal node.

    Its mean becomes ``T_{k-M} delta`` and its covariance the compound of
    the previous registered node's covariance with the covariance of
    ``delta``.  ``delta``/``delta_cov`` default to the odometry edge
    between the two frames, or to their current relative pose with zero
    uncertainty when no such edge exists.  Returns the node id.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    unregistered = graph.nodes_with_status(NodeStatus.UNREGISTERED)
    if len(unregistered) < window:
        raise InsufficientWindowError(
            f"need {window} unregistered frames, have {len(unregistered)}"
        )
    f = unregistered[0]
    return _register(graph, f, _previous_registered(graph, f), delta, delta_cov)


def _register(graph: PoseGraph, f: int, prev_id: int | None, delta, delta_cov) -> int:
    node = graph.nodes[f]
    if prev_id is None:
        # first frame of the map: the reference, with zero covariance
        node.cov = np.zeros((3, 3))
        node.status = NodeStatus.TEMPORAL
        graph.version += 1
        return f

    prev = graph.nodes[prev_id]
    if delta is None or delta_cov is None:
        found = _odometry_between(graph, prev_id, f)
        if delta is None:
            delta = found[0] if found is not None else graph.relative_pose(prev_id, f)
        if delta_cov is None:
            delta_cov = found[1] if found is not None else np.zeros((3, 3))
    node.pose = compose(prev.pose, delta)
    node.cov = compound_covariance(prev.pose, prev.cov, delta, delta_cov)
    node.status = NodeStatus.TEMPORAL
    graph.version += 1
    return f


def register_all(graph: PoseGraph, window: int) -> list[int]:
    """Batch replay of temporal-node creation over every unregistered frame.

    Frames are registered in id order, oldest first, as the window would
    release them; the tail shorter than the window is flushed at the end,
    so in batch the order (and result) does not depend on ``window``.  The
    frame's current pose is kept (``delta`` is the stored relative pose) so
    only covariances are propagated.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    registered = []
    pending = graph.nodes_with_status(NodeStatus.UNREGISTERED)
    prev_id = _previous_registered(graph, pending[0]) if pending else None
    for f in pending:
        delta = None if prev_id is None else graph.relative_pose(prev_id, f)
        registered.append(_register(graph, f, prev_id, delta, None))
        prev_id = f
    return registered
