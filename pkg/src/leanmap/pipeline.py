"""Batch pipeline and deterministic tracker replay over g2o datasets."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass

from .backend import (
    chow_liu_sparsify,
    make_temporal_node,
    marginal_covariances,
    metric_arps,
    metric_t_rel,
    optimize,
    prune_cells,
    register_all,
)
from .errors import LeanmapError
from .geometry import Pose2D, compose, inverse_covariance
from .graph import Edge, EdgeKind, NodeStatus, PoseGraph, covariance_to_information, information_to_covariance
from .io.config import RunConfig
from .io.g2o import DatasetRecord, graph_from_record, info_from_upper
from .io.report import StageReport
from .tracker import Observation, TrackerState, TrackMode, track_step

log = logging.getLogger(__name__)

Reference = Mapping[int, Pose2D] | Sequence[Pose2D]

PIPELINE_STAGES = ("load", "track", "temporal", "optimize_original", "prune", "sparsify", "optimize", "metrics")


@dataclass
class PipelineResult:
    reports: list[StageReport]
    graph: PoseGraph
    original: dict[int, Pose2D]


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.t = time.perf_counter()

    def lap(self) -> float | None:
        now = time.perf_counter()
        dt, self.t = (now - self.t) * 1e3, now
        return round(dt, 3) if self.enabled else None


def run_pipeline(record: DatasetRecord, config: RunConfig, reference: Reference | None = None,
                 timing: bool = False, track: bool = False, delays=None,
                 threaded: bool = True) -> PipelineResult:
    """load, (track), temporal batching, optimize, prune, sparsify, re-optimize, metrics.

    With ``track`` the odometry is first replayed through the tracker and
    the tracked poses replace the dataset's initial estimates.
    ARPS compares the surviving nodes against the optimized, unpruned map.
    ``t_rel`` is reported only when a reference trajectory (indexable by
    node id) is given.  Elapsed times are only filled in with ``timing``
    because they would make reports non-reproducible.
    """
    clock = _Clock(timing)
    reports = []
    graph = graph_from_record(record)
    reports.append(StageReport("load", graph.num_nodes, graph.num_edges, elapsed_ms=clock.lap()))

    if track:
        entries = run_track_replay(record, config, delays, threaded)
        rep = track_report(entries, reference, raw_odometry_trajectory(record))
        rep.elapsed_ms = clock.lap()
        reports.append(rep)
        tracked = DatasetRecord([(e.frame, e.pose.x, e.pose.y, e.pose.theta) for e in entries], record.edges)
        graph = graph_from_record(tracked)

    register_all(graph, config.window)
    reports.append(StageReport("temporal", graph.num_nodes, graph.num_edges, elapsed_ms=clock.lap()))

    opt = dict(max_iter=config.max_iter, tol=config.tol, huber_delta=config.huber_delta)
    optimize(graph, **opt)
    original = graph.poses()
    reports.append(StageReport("optimize_original", graph.num_nodes, graph.num_edges,
                               t_rel_m=_t_rel(graph, reference), elapsed_ms=clock.lap()))

    rep = prune_cells(graph, config.cell_size, config.s, config.weight_mode)
    reports.append(StageReport("prune", graph.num_nodes, graph.num_edges, npc=rep.npc, elapsed_ms=clock.lap()))

    chow_liu_sparsify(graph)
    reports.append(StageReport("sparsify", graph.num_nodes, graph.num_edges, elapsed_ms=clock.lap()))

    optimize(graph, **opt)
    reports.append(StageReport("optimize", graph.num_nodes, graph.num_edges, elapsed_ms=clock.lap()))

    arps = metric_arps(original, graph.poses())
    reports.append(StageReport("metrics", graph.num_nodes, graph.num_edges, npc=rep.npc, arps_pct=arps,
                               t_rel_m=_t_rel(graph, reference), elapsed_ms=clock.lap()))
    return PipelineResult(reports, graph, original)


def _reference_ids(reference: Reference) -> set[int]:
    return set(reference) if isinstance(reference, Mapping) else set(range(len(reference)))


def _t_rel(graph: PoseGraph, reference: Reference | None) -> float | None:
    if reference is None:
        return None
    known = _reference_ids(reference)
    ids = [i for i in graph.live_ids() if i in known]
    return metric_t_rel([graph.nodes[i].pose for i in ids], [reference[i] for i in ids])


# -- replay -----------------------------------------------------------------


@dataclass(frozen=True)
class TrackLogEntry:
    step: int
    frame: int
    mode: TrackMode
    pose: Pose2D

    def as_dict(self) -> dict:
        return {"step": self.step, "frame": self.frame, "mode": self.mode.value,
                "x": self.pose.x, "y": self.pose.y, "theta": self.pose.theta}


def delay_schedule(schedule: str | Sequence[float] | Callable[[int], float] | None) -> Callable[[int], float]:
    """Synthetic per-step elapsed times.

    Accepts a callable, a sequence (cycled), ``"zero"``, ``"inf"``,
    ``"alternate"`` (0, inf, 0, ...) or a comma-separated list.
    """
    if schedule is None or schedule == "zero":
        return lambda step: 0.0
    if callable(schedule):
        return schedule
    if schedule == "inf":
        return lambda step: math.inf
    if schedule == "alternate":
        return lambda step: 0.0 if step % 2 else math.inf
    values = [float(v) for v in schedule.split(",")] if isinstance(schedule, str) else [float(v) for v in schedule]
    if not values:
        raise ValueError("empty delay schedule")
    return lambda step: values[(step - 1) % len(values)]


def _oriented(edge_row, frm: int):
    a, b, dx, dy, dth, upper = edge_row
    z = Pose2D(dx, dy, dth)
    info = info_from_upper(upper)
    if a == frm:
        return z, info
    cov = inverse_covariance(z, information_to_covariance(info))
    return z.inverse(), covariance_to_information(cov)


def replay_observations(record: DatasetRecord) -> tuple[list[int], list[Observation]]:
    """Frames in id order and one observation per frame after the first.

    Odometry is the edge between consecutive frames; a loop edge is handed
    to the later of its two frames.
    """
    frames = sorted(v[0] for v in record.vertices)
    position = {f: k for k, f in enumerate(frames)}
    odometry: dict[int, tuple] = {}
    loops: dict[int, list] = {}
    for row in record.edges:
        a, b = row[0], row[1]
        lo, hi = (a, b) if position[a] < position[b] else (b, a)
        if position[hi] - position[lo] == 1 and hi not in odometry:
            odometry[hi] = _oriented(row, lo)
        else:
            z, info = _oriented(row, lo)
            loops.setdefault(hi, []).append((lo, z, info))
    observations = []
    for f in frames[1:]:
        if f not in odometry:
            raise LeanmapError(f"no odometry edge reaches frame {f}")
        z, info = odometry[f]
        observations.append(Observation(z, info, loops.get(f, []), frame_id=f))
    return frames, observations


class BackendWorker:
    """Single logical back-end: ingests frames, registers temporal nodes, optimizes.

    Every ``window`` registrations the registered subgraph is optimized,
    marginal covariances are recovered, and an immutable snapshot is
    published.
    """

    def __init__(self, config: RunConfig, marginals: bool = True):
        self.config = config
        self.graph = PoseGraph()
        self.marginals = marginals
        self._since_publish = 0
        self._last: int | None = None
        self.snapshot: PoseGraph | None = None

    def ingest(self, frame: int, pose: Pose2D, obs: Observation | None) -> PoseGraph | None:
        g = self.graph
        g.add_node(pose, node_id=frame)
        if obs is not None:
            g.add_edge(Edge(self._last, frame, EdgeKind.ODOMETRY, obs.odometry, obs.odometry_info))
            for q, z, info in obs.loop_candidates:
                g.add_edge(Edge(q, frame, EdgeKind.LOOP_LIDAR, z, info))
        self._last = frame
        window = self.config.window
        while len(g.nodes_with_status(NodeStatus.UNREGISTERED)) >= window:
            make_temporal_node(g, window)
            self._since_publish += 1
        if self._since_publish >= window:
            self._publish()
        return self.snapshot

    def _publish(self) -> None:
        g = self.graph
        ids = g.nodes_with_status(NodeStatus.OPTIMIZED, NodeStatus.TEMPORAL)
        sub = g.subgraph(ids)
        optimize(sub, max_iter=self.config.max_iter, tol=self.config.tol, huber_delta=self.config.huber_delta)
        # the anchor term needs the newest node's marginal; older nodes keep theirs
        covs = marginal_covariances(sub, ids=ids[-1:]) if self.marginals else {}
        for nid in ids:
            node = sub.nodes[nid]
            if nid in covs:
                node.cov = covs[nid]
            g.nodes[nid].pose = node.pose
            g.nodes[nid].cov = node.cov.copy()
            g.nodes[nid].status = NodeStatus.OPTIMIZED
        sub.version = g.version
        self._since_publish = 0
        self.snapshot = sub


def run_track_replay(record: DatasetRecord, config: RunConfig, delays=None,
                     threaded: bool = True) -> list[TrackLogEntry]:
    """Replay odometry through the tracker with the back-end alongside.

    The snapshot used at step ``k`` is the one published after ingesting
    frame ``k - 2``; the back-end ingests frame ``k - 1`` while the tracker
    works on frame ``k``.  The one-step lag is identical with and without
    the worker thread, so both modes give the same log.
    """
    schedule = delay_schedule(delays)
    frames, observations = replay_observations(record)
    if not frames:
        return []
    start = {v[0]: v for v in record.vertices}[frames[0]]
    first = Pose2D(start[1], start[2], start[3])
    state = TrackerState.start(first, frame_id=frames[0], deadline_ms=config.deadline_ms,
                               submap_side=config.submap_side, huber_delta=config.huber_delta)
    worker = BackendWorker(config)
    executor = ThreadPoolExecutor(max_workers=1) if threaded else None

    def submit(frame, pose, obs) -> Future:
        if executor is not None:
            return executor.submit(worker.ingest, frame, pose, obs)
        f: Future = Future()
        f.set_result(worker.ingest(frame, pose, obs))
        return f

    log_entries = [TrackLogEntry(0, frames[0], TrackMode.ESTIMATED, first)]
    snapshot = None
    pending = submit(frames[0], first, None)
    try:
        for step, obs in enumerate(observations, start=1):
            pose, mode = track_step(state, snapshot, obs, schedule(step))
            log_entries.append(TrackLogEntry(step, obs.frame_id, mode, pose))
            snapshot = pending.result()
            pending = submit(obs.frame_id, pose, obs)
        pending.result()
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return log_entries


def raw_odometry_trajectory(record: DatasetRecord) -> list[Pose2D]:
    """Dead reckoning of the replayed odometry from the first vertex."""
    frames, observations = replay_observations(record)
    start = {v[0]: v for v in record.vertices}[frames[0]]
    out = [Pose2D(start[1], start[2], start[3])]
    for obs in observations:
        out.append(compose(out[-1], obs.odometry))
    return out


def track_report(entries: list[TrackLogEntry], reference: Reference | None = None,
                 raw: Sequence[Pose2D] | None = None) -> StageReport:
    """Summary of a replay; ``t_rel`` of tracked (and raw) poses when a reference is known."""
    extra = {"fallback_steps": sum(e.mode is TrackMode.FALLBACK for e in entries)}
    t_rel = None
    if reference is not None:
        known = _reference_ids(reference)
        idx = [k for k, e in enumerate(entries) if e.frame in known]
        truth = [reference[entries[k].frame] for k in idx]
        t_rel = metric_t_rel([entries[k].pose for k in idx], truth)
        if raw is not None:
            extra["raw_t_rel_m"] = metric_t_rel([raw[k] for k in idx], truth)
    return StageReport("track", len(entries), 0, t_rel_m=t_rel, extra=extra)


__all__ = [
    "BackendWorker",
    "PIPELINE_STAGES",
    "PipelineResult",
    "TrackLogEntry",
    "delay_schedule",
    "raw_odometry_trajectory",
    "replay_observations",
    "run_pipeline",
    "run_track_replay",
    "track_report",
]
