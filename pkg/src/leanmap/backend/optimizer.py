"""Sparse robust pose-graph optimization.

Minimizes the sum of plain quadratic odometry terms and robustified loop
terms.  Loop edges without an explicit kernel get a Huber kernel with the
configured threshold; max-mixture edges pick their most likely component
before each linearization.  Levenberg-style damping guards the
Gauss-Newton steps, and a step is only accepted if it lowers the cost.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, splu

from ..errors import DisconnectedGraphError, LeanmapError, UnderconstrainedError
from ..geometry import Pose2D, wrap_angles
from ..graph import Huber, MaxMixture, NodeStatus, PoseGraph

log = logging.getLogger(__name__)

_PLAIN, _HUBER, _MM = 0, 1, 2


@dataclass
class OptimizeResult:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    gauge: int


def edge_residuals(poses: np.ndarray, i: np.ndarray, j: np.ndarray, z: np.ndarray):
    """Residuals ``z^-1 (x_i^-1 x_j)`` and their Jacobians, vectorized over edges.

    ``poses`` is ``(N, 3)``; ``i``/``j`` index rows of it; ``z`` is ``(E, 3)``.
    Returns ``e (E, 3)``, ``A = de/dx_i`` and ``B = de/dx_j`` (both ``(E, 3, 3)``).
    """
    xi, xj = poses[i], poses[j]
    ci, si = np.cos(xi[:, 2]), np.sin(xi[:, 2])
    cz, sz = np.cos(z[:, 2]), np.sin(z[:, 2])
    dx, dy = xj[:, 0] - xi[:, 0], xj[:, 1] - xi[:, 1]
    # x_i^-1 x_j translation
    lx = ci * dx + si * dy
    ly = -si * dx + ci * dy
    qx, qy = lx - z[:, 0], ly - z[:, 1]
    e = np.empty((len(i), 3))
    e[:, 0] = cz * qx + sz * qy
    e[:, 1] = -sz * qx + cz * qy
    e[:, 2] = wrap_angles(xj[:, 2] - xi[:, 2] - z[:, 2])

    # R_z^T R_i^T
    m00 = cz * ci - sz * si
    m01 = cz * si + sz * ci
    m10 = -sz * ci - cz * si
    m11 = -sz * si + cz * ci
    # d(R_i^T dt)/dtheta_i = (ly, -lx)
    dth0 = cz * ly - sz * lx
    dth1 = -sz * ly - cz * lx

    a = np.zeros((len(i), 3, 3))
    b = np.zeros((len(i), 3, 3))
    a[:, 0, 0], a[:, 0, 1], a[:, 0, 2] = -m00, -m01, dth0
    a[:, 1, 0], a[:, 1, 1], a[:, 1, 2] = -m10, -m11, dth1
    a[:, 2, 2] = -1.0
    b[:, 0, 0], b[:, 0, 1] = m00, m01
    b[:, 1, 0], b[:, 1, 1] = m10, m11
    b[:, 2, 2] = 1.0
    return e, a, b


class _Problem:
    """Edge arrays of a graph frozen for one optimization run."""

    def __init__(self, graph: PoseGraph, huber_delta: float | None):
        self.ids = graph.live_ids()
        self.index = {nid: k for k, nid in enumerate(self.ids)}
        eids = sorted(graph.edges)
        self.eids = eids
        n_e = len(eids)
        self.i = np.empty(n_e, dtype=np.int64)
        self.j = np.empty(n_e, dtype=np.int64)
        self.z = np.empty((n_e, 3))
        self.info = np.empty((n_e, 3, 3))
        self.kind = np.full(n_e, _PLAIN, dtype=np.int8)
        self.delta = np.ones(n_e)
        self.mixtures: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for k, eid in enumerate(eids):
            e = graph.edges[eid]
            self.i[k] = self.index[e.src]
            self.j[k] = self.index[e.dst]
            self.z[k] = e.measurement.as_array()
            self.info[k] = e.information
            if isinstance(e.kernel, MaxMixture):
                self.kind[k] = _MM
                comps = e.kernel.components
                zs = np.array([c.measurement.as_array() for c in comps])
                infos = np.array([np.asarray(c.information, dtype=float) for c in comps])
                # -2 log w - log det(info): the component's normalizer in cost units
                bias = np.array([
                    -2.0 * math.log(c.weight) - _logdet(np.asarray(c.information, dtype=float))
                    for c in comps
                ])
                self.mixtures[k] = (zs, infos, bias)
            elif isinstance(e.kernel, Huber):
                self.kind[k] = _HUBER
                self.delta[k] = e.kernel.delta
            elif e.kernel is None and e.kind.is_loop and huber_delta is not None:
                self.kind[k] = _HUBER
                self.delta[k] = huber_delta
        self.mm_rows = np.array(sorted(self.mixtures), dtype=np.int64)

    def select_components(self, poses: np.ndarray):
        """Effective measurement/information per edge plus per-edge cost offsets."""
        z = self.z.copy()
        info = self.info.copy()
        offset = np.zeros(len(self.eids))
        chosen = {}
        for k, (zs, infos, bias) in self.mixtures.items():
            m = len(zs)
            e, _, _ = edge_residuals(poses, np.full(m, self.i[k]), np.full(m, self.j[k]), zs)
            s = np.einsum("ci,cij,cj->c", e, infos, e)
            c = int(np.argmin(s + bias))  # ties -> first component
            z[k], info[k], offset[k] = zs[c], infos[c], bias[c]
            chosen[k] = c
        return z, info, offset, chosen

    def evaluate(self, poses: np.ndarray, with_jacobians: bool = True):
        z, info, offset, chosen = self.select_components(poses)
        e, a, b = edge_residuals(poses, self.i, self.j, z)
        s = np.maximum(np.einsum("ei,eij,ej->e", e, info, e), 0.0)
        rho = s.copy()
        w = np.ones_like(s)
        hub = self.kind == _HUBER
        if np.any(hub):
            d = self.delta[hub]
            root = np.sqrt(s[hub])
            out = root > d
            rh = rho[hub]
            wh = w[hub]
            rh[out] = 2.0 * d[out] * root[out] - d[out] ** 2
            wh[out] = d[out] / root[out]
            rho[hub] = rh
            w[hub] = wh
        cost = float(np.sum(rho + offset))
        if not with_jacobians:
            return cost, None
        return cost, (e, a, b, info, w, chosen)


def _logdet(m: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(m)
    if sign <= 0:
        raise LeanmapError("max-mixture component information must be positive definite")
    return float(val)


def _check_connected(graph: PoseGraph, gauge: int) -> None:
    seen = {gauge}
    queue = deque([gauge])
    while queue:
        n = queue.popleft()
        for eid in graph.adjacency[n]:
            m = graph.edges[eid].other(n)
            if m not in seen:
                seen.add(m)
                queue.append(m)
    missing = set(graph.live_ids()) - seen
    if missing:
        raise DisconnectedGraphError(missing)


def _normal_equations(problem: _Problem, lin, n: int):
    e, a, b, info, w, _ = lin
    wi = info * w[:, None, None]
    hii = np.einsum("eki,ekl,elj->eij", a, wi, a)
    hij = np.einsum("eki,ekl,elj->eij", a, wi, b)
    hjj = np.einsum("eki,ekl,elj->eij", b, wi, b)
    we = np.einsum("eij,ej->ei", wi, e)
    gi = np.einsum("eki,ek->ei", a, we)
    gj = np.einsum("eki,ek->ei", b, we)

    r3 = np.arange(3)
    rows_blk = (3 * problem.i)[:, None, None] + r3[None, :, None]
    cols_blk_i = (3 * problem.i)[:, None, None] + r3[None, None, :]
    rows_blk_j = (3 * problem.j)[:, None, None] + r3[None, :, None]
    cols_blk_j = (3 * problem.j)[:, None, None] + r3[None, None, :]
    shape = np.broadcast_shapes(rows_blk.shape, cols_blk_i.shape)
    rows = np.concatenate([
        np.broadcast_to(rows_blk, shape).ravel(),
        np.broadcast_to(rows_blk, shape).ravel(),
        np.broadcast_to(rows_blk_j, shape).ravel(),
        np.broadcast_to(rows_blk_j, shape).ravel(),
    ])
    cols = np.concatenate([
        np.broadcast_to(cols_blk_i, shape).ravel(),
        np.broadcast_to(cols_blk_j, shape).ravel(),
        np.broadcast_to(cols_blk_i, shape).ravel(),
        np.broadcast_to(cols_blk_j, shape).ravel(),
    ])
    vals = np.concatenate([hii.ravel(), hij.ravel(), np.transpose(hij, (0, 2, 1)).ravel(), hjj.ravel()])
    h = sp.coo_matrix((vals, (rows, cols)), shape=(3 * n, 3 * n)).tocsc()
    g = np.zeros(3 * n)
    np.add.at(g, (3 * problem.i)[:, None] + r3, gi)
    np.add.at(g, (3 * problem.j)[:, None] + r3, gj)
    return h, g


def information_matrix(graph: PoseGraph, huber_delta: float | None = None):
    """Sparse normal-equations matrix at the current poses, plus the id order."""
    problem = _Problem(graph, huber_delta)
    poses = np.array([graph.nodes[nid].pose.as_array() for nid in problem.ids])
    _, lin = problem.evaluate(poses)
    h, _ = _normal_equations(problem, lin, len(problem.ids))
    return h, problem.ids


def factorize_spd(h: sp.csc_matrix):
    """Sparse LU of a symmetric positive (semi)definite matrix.

    Symmetric mode with diagonal pivots keeps the fill-reducing ordering
    intact, which is much cheaper than partial pivoting here.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            return splu(h, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options={"SymmetricMode": True})
        except (RuntimeError, MatrixRankWarning) as exc:
            raise UnderconstrainedError(f"singular normal equations: {exc}") from exc


def _check_rank(h: sp.csc_matrix) -> None:
    # damping would hide a rank-deficient system, so test the undamped one
    u = np.abs(factorize_spd(h).U.diagonal())
    if u.size and u.min() <= 1e-12 * max(u.max(), 1e-300):
        raise UnderconstrainedError("singular normal equations: a pose direction is unconstrained")


def _solve(h: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    x = factorize_spd(h).solve(rhs)
    if not np.all(np.isfinite(x)):
        raise UnderconstrainedError("singular normal equations: non-finite step")
    return x


def graph_cost(graph: PoseGraph, huber_delta: float | None = 1.0) -> float:
    """Robust objective at the current node poses."""
    problem = _Problem(graph, huber_delta)
    poses = np.array([graph.nodes[nid].pose.as_array() for nid in problem.ids])
    cost, _ = problem.evaluate(poses, with_jacobians=False)
    return cost


def selected_components(graph: PoseGraph) -> dict[int, int]:
    """Edge id -> index of the max-likelihood component, for max-mixture edges."""
    problem = _Problem(graph, None)
    poses = np.array([graph.nodes[nid].pose.as_array() for nid in problem.ids])
    _, _, _, chosen = problem.select_components(poses)
    return {problem.eids[k]: c for k, c in chosen.items()}


def optimize(graph: PoseGraph, max_iter: int = 100, tol: float = 1e-9,
             huber_delta: float | None = 1.0, gauge: int | None = None,
             mark_optimized: bool = True) -> OptimizeResult:
    """Optimize all live node poses in place.

    ``gauge`` defaults to the smallest live node id and is held fixed.
    Stops when the relative cost decrease of an accepted step falls below
    ``tol``, when no damped step can decrease the cost, or after
    ``max_iter`` iterations.
    """
    ids = graph.live_ids()
    if not ids:
        return OptimizeResult(0, 0.0, 0.0, True, -1)
    if gauge is None:
        gauge = ids[0]
    if gauge not in graph.nodes or not graph.nodes[gauge].live:
        raise LeanmapError(f"gauge node {gauge} is not a live node")
    _check_connected(graph, gauge)

    problem = _Problem(graph, huber_delta)
    n = len(problem.ids)
    poses = np.array([graph.nodes[nid].pose.as_array() for nid in problem.ids])
    g_idx = problem.index[gauge]
    keep = np.ones(3 * n, dtype=bool)
    keep[3 * g_idx: 3 * g_idx + 3] = False

    cost, lin = problem.evaluate(poses)
    initial = cost
    lam = 1e-6
    converged = False
    it = 0
    if n == 1 or len(problem.eids) == 0 or (abs(cost) <= 1e-30 and problem.mm_rows.size == 0):
        converged = True
    while not converged and it < max_iter:
        it += 1
        h, g = _normal_equations(problem, lin, n)
        h = h[keep][:, keep].tocsc()
        g = g[keep]
        diag = h.diagonal()
        if it == 1:
            _check_rank(h)
        accepted = False
        for _ in range(12):
            damped = h + sp.diags(lam * np.maximum(diag, 1e-12), format="csc")
            step = _solve(damped, -g)
            trial = poses.copy()
            trial.reshape(-1)[keep] += step
            trial[:, 2] = wrap_angles(trial[:, 2])
            new_cost, new_lin = problem.evaluate(trial)
            if new_cost <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True
            break
        decrease = cost - new_cost
        poses, cost, lin = trial, new_cost, new_lin
        lam = max(lam * 0.1, 1e-12)
        if (decrease <= tol * max(abs(cost), 1e-300) or np.max(np.abs(step)) < 1e-14
                or (abs(cost) <= 1e-30 and problem.mm_rows.size == 0)):
            converged = True

    for k, nid in enumerate(problem.ids):
        node = graph.nodes[nid]
        node.pose = Pose2D.from_array(poses[k])
        if mark_optimized and node.status is not NodeStatus.PRUNED:
            node.status = NodeStatus.OPTIMIZED
    graph.version += 1
    log.debug("optimize: %d iterations, cost %.6g -> %.6g", it, initial, cost)
    return OptimizeResult(it, initial, cost, converged, gauge)

