"""Semi-real-time global pose tracking against a delayed optimized map.

The tracker fuses three kinds of evidence about the current pose in a
3-DOF robust Gauss-Newton solve:

* the odometry chain from the previous estimate (the reference pose),
* the anchor: the optimized map node closest, in Mahalanobis distance, to
  the last pose the back-end optimized, carried forward by raw odometry,
* loop measurements to map nodes inside the submap window, under a Huber
  kernel.

When the estimate cannot be produced inside the deadline, the last
correction between raw odometry and the corrected trajectory is reused
instead, which keeps the output continuous.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrackerNotReadyError, UnderconstrainedError
from .geometry import (
    Pose2D,
    compose,
    compound_covariance,
    inverse_compose,
    pose_residual,
    symmetrize,
    wrap_angles,
)
from .graph import NodeStatus, PoseGraph, information_to_covariance

MAX_ITERATIONS = 50
STEP_TOLERANCE = 1e-8
# added to anchor covariances that would otherwise be singular
COV_FLOOR = 1e-9


class TrackMode(str, enum.Enum):
    ESTIMATED = "estimated"
    FALLBACK = "fallback"


@dataclass
class Observation:
    odometry: Pose2D
    odometry_info: np.ndarray = field(default_factory=lambda: np.eye(3))
    # (map node id q, measurement from q to the current frame, information)
    loop_candidates: list[tuple[int, Pose2D, np.ndarray]] = field(default_factory=list)
    frame_id: int | None = None


@dataclass
class PoseEstimate:
    pose: Pose2D
    cov: np.ndarray
    converged: bool = True
    iterations: int = 0
    costs: list[float] = field(default_factory=list)

    @property
    def low_confidence(self) -> bool:
        return not self.converged


@dataclass
class TrackerState:
    reference: Pose2D
    reference_cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    last_pgo: Pose2D | None = None
    last_pgo_cov: np.ndarray | None = None
    anchor: int | None = None
    correction: Pose2D = field(default_factory=Pose2D.identity)
    # raw odometry pose at the last correction, and the corrected pose then
    last_odometry: Pose2D | None = None
    last_corrected: Pose2D | None = None
    deadline_ms: float = 50.0
    submap_side: float = 10.0
    huber_delta: float | None = 1.0
    raw_pose: Pose2D = field(default_factory=Pose2D.identity)
    step: int = 0
    # frame id -> (step index, raw odometry pose)
    raw_history: dict[int, tuple[int, Pose2D]] = field(default_factory=dict)
    map_version: int | None = None

    @classmethod
    def start(cls, initial: Pose2D, frame_id: int = 0, cov=None, **kwargs) -> TrackerState:
        """Tracker at ``initial``, with raw odometry aligned to it."""
        state = cls(reference=initial, raw_pose=initial, **kwargs)
        if cov is not None:
            state.reference_cov = symmetrize(np.asarray(cov, dtype=float))
        state.raw_history[frame_id] = (0, initial)
        return state


def _regularized(cov) -> np.ndarray:
    cov = symmetrize(np.asarray(cov, dtype=float))
    if np.linalg.eigvalsh(cov)[0] <= COV_FLOOR:
        cov = cov + COV_FLOOR * np.eye(3)
    return cov


def select_anchor(snapshot: PoseGraph, last_pgo: Pose2D, last_pgo_cov=None) -> int:
    """Optimized node closest to ``last_pgo`` in squared Mahalanobis distance.

    The distance to node ``n`` uses ``n.cov + last_pgo_cov``; ties go to
    the smallest id.
    """
    cov_f = np.zeros((3, 3)) if last_pgo_cov is None else np.asarray(last_pgo_cov, dtype=float)
    ids = snapshot.nodes_with_status(NodeStatus.OPTIMIZED)
    if not ids:
        raise TrackerNotReadyError("no optimized nodes to anchor the tracker")
    poses = np.array([snapshot.nodes[i].pose.as_array() for i in ids])
    covs = np.array([snapshot.nodes[i].cov for i in ids]) + cov_f
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    low = np.linalg.eigvalsh(covs)[:, 0] <= COV_FLOOR
    covs[low] += COV_FLOOR * np.eye(3)
    r = poses - last_pgo.as_array()
    r[:, 2] = wrap_angles(r[:, 2])
    d = np.einsum("ni,ni->n", r, np.linalg.solve(covs, r[..., None])[..., 0])
    # argmin returns the first minimum, i.e. the smallest id
    return ids[int(np.argmin(d))]


def refresh_map(state: TrackerState, snapshot: PoseGraph | None) -> bool:
    """Adopt a newly published snapshot: update the last PGO pose and the anchor."""
    if snapshot is None or snapshot.version == state.map_version:
        return False
    optimized = snapshot.nodes_with_status(NodeStatus.OPTIMIZED)
    state.map_version = snapshot.version
    if not optimized:
        return False
    latest = snapshot.nodes[optimized[-1]]
    state.last_pgo = latest.pose
    state.last_pgo_cov = latest.cov.copy()
    state.anchor = select_anchor(snapshot, state.last_pgo, state.last_pgo_cov)
    return True


def predict(state: TrackerState, obs: Observation) -> Pose2D:
    """Motion-model prediction: previous estimate composed with the odometry increment."""
    return compose(state.reference, obs.odometry)


def _usable_information(info) -> bool:
    info = np.asarray(info, dtype=float)
    return bool(np.any(info != 0.0)) and np.linalg.eigvalsh(symmetrize(info))[-1] > 0.0


def _prior_covariance(state: TrackerState, obs: Observation) -> np.ndarray:
    return compound_covariance(state.reference, state.reference_cov, obs.odometry,
                               information_to_covariance(obs.odometry_info))


@dataclass
class _Term:
    mean: Pose2D
    weight: np.ndarray
    robust: bool


def _objective(x: Pose2D, terms: list[_Term], delta: float | None) -> float:
    total = 0.0
    for t in terms:
        r = pose_residual(t.mean, x)
        s = max(float(r @ t.weight @ r), 0.0)
        if t.robust and delta is not None and s > delta * delta:
            total += 2.0 * delta * math.sqrt(s) - delta * delta
        else:
            total += s
    return total


def tracking_terms(state: TrackerState, snapshot: PoseGraph | None, obs: Observation) -> list[_Term]:
    """The factors of the tracking problem, each as a world-frame pose prior."""
    terms: list[_Term] = []
    x_bar = predict(state, obs)
    raw_k = compose(state.raw_pose, obs.odometry)
    use_odometry = _usable_information(obs.odometry_info)
    if use_odometry:
        cov = _regularized(_prior_covariance(state, obs))
        terms.append(_Term(x_bar, np.linalg.inv(cov), False))

    if snapshot is not None and state.anchor is not None and state.anchor in snapshot.nodes:
        anchor = snapshot.nodes[state.anchor]
        hist = state.raw_history.get(anchor.id)
        if anchor.live and hist is not None:
            anchor_step, anchor_raw = hist
            rel = inverse_compose(anchor_raw, raw_k)
            if use_odometry:
                steps = max(state.step + 1 - anchor_step, 1)
                rel_cov = steps * information_to_covariance(obs.odometry_info)
            else:
                rel_cov = np.zeros((3, 3))
            cov = _regularized(compound_covariance(anchor.pose, anchor.cov, rel, rel_cov))
            terms.append(_Term(compose(anchor.pose, rel), np.linalg.inv(cov), False))

    if snapshot is not None and obs.loop_candidates:
        window = set(snapshot.submap_nodes(x_bar, state.submap_side))
        for q, z, info in obs.loop_candidates:
            if q not in window:
                continue
            node = snapshot.nodes[q]
            cov = _regularized(compound_covariance(node.pose, node.cov, z, information_to_covariance(info)))
            terms.append(_Term(compose(node.pose, z), np.linalg.inv(cov), True))
    return terms


def solve_terms(terms: list[_Term], start: Pose2D, delta: float | None) -> PoseEstimate:
    """Robust Gauss-Newton with step halving over world-frame pose priors."""
    if not terms:
        raise UnderconstrainedError("no factors constrain the current pose")
    x = start
    cost = _objective(x, terms, delta)
    costs = [cost]
    converged = False
    it = 0
    h = None
    for it in range(1, MAX_ITERATIONS + 1):
        h = np.zeros((3, 3))
        g = np.zeros(3)
        for t in terms:
            r = pose_residual(t.mean, x)
            s = max(float(r @ t.weight @ r), 0.0)
            w = 1.0
            if t.robust and delta is not None and s > delta * delta:
                w = delta / math.sqrt(s)
            h += w * t.weight
            g += w * (t.weight @ r)
        h = symmetrize(h)
        eig = np.linalg.eigvalsh(h)
        if eig[0] <= 1e-15 * max(1.0, eig[-1]):
            raise UnderconstrainedError("singular normal equations in pose tracking")
        step = -np.linalg.solve(h, g)
        alpha = 1.0
        trial = Pose2D.from_array(x.as_array() + step)
        trial_cost = _objective(trial, terms, delta)
        while trial_cost > cost and alpha > 1e-6:
            alpha *= 0.5
            trial = Pose2D.from_array(x.as_array() + alpha * step)
            trial_cost = _objective(trial, terms, delta)
        if trial_cost <= cost:
            x, cost = trial, trial_cost
            costs.append(cost)
        if alpha * np.linalg.norm(step) < STEP_TOLERANCE:
            converged = True
            break
    cov = symmetrize(np.linalg.inv(h))
    return PoseEstimate(x, cov, converged, it, costs)


def estimate_global_pose(state: TrackerState, snapshot: PoseGraph | None, obs: Observation) -> PoseEstimate:
    """Minimize the tracking objective for the current frame.

    Starts from the motion-model prediction when odometry information is
    available, otherwise from the first available factor.
    """
    terms = tracking_terms(state, snapshot, obs)
    start = predict(state, obs) if _usable_information(obs.odometry_info) or not terms else terms[0].mean
    return solve_terms(terms, start, state.huber_delta)


def apply_correction_cache(state: TrackerState, estimated: Pose2D, raw_odometry_pose: Pose2D) -> Pose2D:
    """Store the correction ``dT`` with ``dT ⊕ raw == estimated`` and return it."""
    correction = compose(estimated, raw_odometry_pose.inverse())
    state.correction = correction
    state.last_corrected = estimated
    state.last_odometry = raw_odometry_pose
    return correction


def worst_case_predict(state: TrackerState, new_raw_odometry: Pose2D) -> Pose2D:
    """Carry the last corrected pose forward by the raw odometry increment."""
    if state.last_corrected is None or state.last_odometry is None:
        return new_raw_odometry
    return compose(state.last_corrected, inverse_compose(state.last_odometry, new_raw_odometry))


def track_step(state: TrackerState, snapshot: PoseGraph | None, obs: Observation,
               elapsed_ms: float) -> tuple[Pose2D, TrackMode]:
    """Advance the tracker by one frame.

    ``elapsed_ms`` is the time already spent on this frame (synthetic in
    replay); past the deadline the worst-case prediction is returned.
    """
    refresh_map(state, snapshot)
    raw_k = compose(state.raw_pose, obs.odometry)
    if elapsed_ms <= state.deadline_ms:
        est = estimate_global_pose(state, snapshot, obs)
        pose, cov = est.pose, est.cov
        apply_correction_cache(state, pose, raw_k)
        mode = TrackMode.ESTIMATED
    else:
        pose = worst_case_predict(state, raw_k)
        cov = _prior_covariance(state, obs)
        mode = TrackMode.FALLBACK
    state.step += 1
    frame = obs.frame_id if obs.frame_id is not None else state.step
    state.reference, state.reference_cov = pose, cov
    state.raw_pose = raw_k
    state.raw_history[frame] = (state.step, raw_k)
    return pose, mode
