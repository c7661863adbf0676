"""Map-quality metrics: RMS translation error and average ratio of pose shift."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

import numpy as np

from ..errors import NoComparableNodesError
from ..geometry import Pose2D

# reference positions closer to the origin than this are skipped by ARPS
ARPS_MIN_NORM = 1e-6


def _xy(poses) -> np.ndarray:
    return np.array([[p.x, p.y] if isinstance(p, Pose2D) else [p[0], p[1]] for p in poses],
                    dtype=float).reshape(-1, 2)


def metric_t_rel(estimate: Sequence, ground_truth: Sequence) -> float:
    """Root-mean-square position error in meters."""
    if len(estimate) != len(ground_truth):
        raise ValueError(f"length mismatch: {len(estimate)} estimates vs {len(ground_truth)} references")
    if len(estimate) == 0:
        raise ValueError("empty trajectories")
    diff = _xy(estimate) - _xy(ground_truth)
    return math.sqrt(float(np.sum(diff**2)) / len(estimate))


def metric_arps(original: Mapping[int, Pose2D] | Sequence, pruned: Mapping[int, Pose2D] | Sequence) -> float:
    """Average ratio of pose shift, in percent.

    Accepts two id -> pose mappings (only shared ids are compared) or two
    equal-length sequences that are already aligned.
    """
    if isinstance(original, Mapping) and isinstance(pruned, Mapping):
        ids = sorted(set(original) & set(pruned))
        a = _xy([original[i] for i in ids])
        b = _xy([pruned[i] for i in ids])
    else:
        if len(original) != len(pruned):
            raise ValueError("aligned pose lists must have equal length")
        a, b = _xy(original), _xy(pruned)
    norms = np.linalg.norm(a, axis=1)
    ok = norms >= ARPS_MIN_NORM
    if not np.any(ok):
        raise NoComparableNodesError("no comparable nodes for ARPS")
    ratio = np.linalg.norm(a[ok] - b[ok], axis=1) / norms[ok]
    return float(np.mean(ratio) * 100.0)
