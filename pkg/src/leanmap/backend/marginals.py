"""Marginal covariance recovery from the sparse information matrix."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from ..graph import PoseGraph
from .optimizer import factorize_spd, information_matrix

_BLOCK_COLUMNS = 768


def marginal_covariances(graph: PoseGraph, gauge: int | None = None,
                         ids: Iterable[int] | None = None) -> dict[int, np.ndarray]:
    """3x3 marginal covariances of live nodes (all, or ``ids``), gauge node fixed.

    Factorizes the reduced information matrix once and solves for the
    needed identity columns in blocks, keeping only the diagonal 3x3
    blocks.  The gauge node gets a zero covariance.
    """
    h, order = information_matrix(graph)
    if not order:
        return {}
    if gauge is None:
        gauge = order[0]
    g = order.index(gauge)
    n = len(order)
    keep = np.ones(3 * n, dtype=bool)
    keep[3 * g: 3 * g + 3] = False
    h = h[keep][:, keep].tocsc()
    wanted = set(order) if ids is None else set(ids)
    out = {gauge: np.zeros((3, 3))} if gauge in wanted else {}
    if h.shape[0] == 0:
        return out
    lu = factorize_spd(h)
    others = [nid for nid in order if nid != gauge]
    targets = [k for k, nid in enumerate(others) if nid in wanted]
    dim = h.shape[0]
    per_block = _BLOCK_COLUMNS // 3
    for start in range(0, len(targets), per_block):
        chunk = targets[start:start + per_block]
        rhs = np.zeros((dim, 3 * len(chunk)))
        for c, k in enumerate(chunk):
            rhs[3 * k: 3 * k + 3, 3 * c: 3 * c + 3] = np.eye(3)
        cols = lu.solve(rhs)
        for c, k in enumerate(chunk):
            blk = cols[3 * k: 3 * k + 3, 3 * c: 3 * c + 3]
            out[others[k]] = 0.5 * (blk + blk.T)
    return out
