"""SE(2) pose algebra and Gaussian uncertainty primitives.

Poses are ``(x, y, theta)`` with ``theta`` wrapped to ``(-pi, pi]`` on
construction. Covariances are plain ``(3, 3)`` numpy arrays ordered
``x, y, theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovarianceError

TWO_PI = 2.0 * math.pi
# smallest eigenvalue accepted by smd()/gaussian_uncertainty()
MIN_COV_EIGENVALUE = 1e-12


def wrap_angle(theta: float) -> float:
    """Wrap an angle to ``(-pi, pi]``."""
    w = math.remainder(theta, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    w = np.remainder(theta + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return w


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> Pose2D:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, v) -> Pose2D:
        return cls(v[0], v[1], v[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def inverse(self) -> Pose2D:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def is_identity(self) -> bool:
        return self.x == 0.0 and self.y == 0.0 and self.theta == 0.0

    def __iter__(self):
        yield self.x
        yield self.y
        yield self.theta


# A rigid-body transform shares the pose parameterization.
Transform2D = Pose2D


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """``a ⊕ b``: apply transform ``b`` expressed in the frame of ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse_compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """``a ⊖ b``: the transform ``d`` with ``compose(a, d) == b``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    dx, dy = b.x - a.x, b.y - a.y
    return Pose2D(c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta)


def compose_jacobians(a: Pose2D, b: Pose2D) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of ``compose(a, b)`` with respect to ``a`` and ``b``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    ja = np.array(
        [
            [1.0, 0.0, -s * b.x - c * b.y],
            [0.0, 1.0, c * b.x - s * b.y],
            [0.0, 0.0, 1.0],
        ]
    )
    jb = np.array(
        [
            [c, -s, 0.0],
            [s, c, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return ja, jb


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Symmetric part of a matrix or of a stack of matrices."""
    m = np.asarray(m)
    return 0.5 * (m + m.swapaxes(-1, -2))


def compound_covariance(pose_a: Pose2D, cov_a, rel: Pose2D, cov_rel) -> np.ndarray:
    """First-order covariance of ``compose(pose_a, rel)``.

    ``J_a cov_a J_a^T + J_rel cov_rel J_rel^T`` with the compounding
    Jacobians evaluated at the means; the two inputs are treated as
    independent.
    """
    ja, jb = compose_jacobians(pose_a, rel)
    out = ja @ np.asarray(cov_a, dtype=float) @ ja.T + jb @ np.asarray(cov_rel, dtype=float) @ jb.T
    return symmetrize(out)


def inverse_covariance(pose: Pose2D, cov) -> np.ndarray:
    """First-order covariance of ``pose.inverse()``."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    # d(inverse)/d(pose)
    j = np.array(
        [
            [-c, -s, s * pose.x - c * pose.y],
            [s, -c, c * pose.x + s * pose.y],
            [0.0, 0.0, -1.0],
        ]
    )
    return symmetrize(j @ np.asarray(cov, dtype=float) @ j.T)


def pose_residual(a: Pose2D, b: Pose2D) -> np.ndarray:
    """World-frame difference ``b - a`` with the angle wrapped."""
    return np.array([b.x - a.x, b.y - a.y, wrap_angle(b.theta - a.theta)])


def _checked_cov(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3):
        raise ValueError(f"covariance must be 3x3, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise DegenerateCovarianceError("covariance has non-finite entries")
    lo = np.linalg.eigvalsh(symmetrize(cov))[0]
    if lo <= MIN_COV_EIGENVALUE:
        raise DegenerateCovarianceError(
            f"covariance is singular or nearly so (smallest eigenvalue {lo:.3g})"
        )
    return cov


def smd(a: Pose2D, b: Pose2D, cov) -> float:
    """Squared Mahalanobis distance between two poses under ``cov``."""
    cov = _checked_cov(cov)
    r = pose_residual(a, b)
    return float(max(r @ np.linalg.solve(cov, r), 0.0))


def gaussian_uncertainty(a: Pose2D, b: Pose2D, cov) -> float:
    """Gaussian density of the pose difference, ``exp(-smd/2) / eta``.

    ``eta = (2 pi)^{3/2} sqrt(det cov)`` is the full trivariate normalizer.
    """
    cov = _checked_cov(cov)
    d = smd(a, b, cov)
    eta = TWO_PI**1.5 * math.sqrt(np.linalg.det(cov))
    return math.exp(-0.5 * d) / eta


def is_covariance(cov, tol: float = 1e-9) -> bool:
    """True when ``cov`` is a symmetric PSD 3x3 matrix within ``tol``."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (3, 3) or not np.all(np.isfinite(cov)):
        return False
    if np.max(np.abs(cov - cov.T)) > tol:
        return False
    return bool(np.linalg.eigvalsh(symmetrize(cov))[0] >= -tol)


# -- vectorized forms over (n, 3) pose arrays and (n, 3, 3) covariances --


def compose_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, s = np.cos(a[:, 2]), np.sin(a[:, 2])
    return np.column_stack([
        a[:, 0] + c * b[:, 0] - s * b[:, 1],
        a[:, 1] + s * b[:, 0] + c * b[:, 1],
        wrap_angles(a[:, 2] + b[:, 2]),
    ])


def inverse_arrays(p: np.ndarray) -> np.ndarray:
    c, s = np.cos(p[:, 2]), np.sin(p[:, 2])
    return np.column_stack([
        -c * p[:, 0] - s * p[:, 1],
        s * p[:, 0] - c * p[:, 1],
        wrap_angles(-p[:, 2]),
    ])


def compound_covariance_arrays(a: np.ndarray, cov_a: np.ndarray, b: np.ndarray,
                               cov_b: np.ndarray) -> np.ndarray:
    n = len(a)
    c, s = np.cos(a[:, 2]), np.sin(a[:, 2])
    ja = np.tile(np.eye(3), (n, 1, 1))
    ja[:, 0, 2] = -s * b[:, 0] - c * b[:, 1]
    ja[:, 1, 2] = c * b[:, 0] - s * b[:, 1]
    jb = np.zeros((n, 3, 3))
    jb[:, 0, 0], jb[:, 0, 1], jb[:, 1, 0], jb[:, 1, 1], jb[:, 2, 2] = c, -s, s, c, 1.0
    out = ja @ cov_a @ np.swapaxes(ja, 1, 2) + jb @ cov_b @ np.swapaxes(jb, 1, 2)
    return symmetrize(out)


def inverse_covariance_arrays(p: np.ndarray, cov: np.ndarray) -> np.ndarray:
    c, s = np.cos(p[:, 2]), np.sin(p[:, 2])
    j = np.zeros((len(p), 3, 3))
    j[:, 0, 0], j[:, 0, 1], j[:, 0, 2] = -c, -s, s * p[:, 0] - c * p[:, 1]
    j[:, 1, 0], j[:, 1, 1], j[:, 1, 2] = s, -c, c * p[:, 0] + s * p[:, 1]
    j[:, 2, 2] = -1.0
    return symmetrize(j @ cov @ np.swapaxes(j, 1, 2))
