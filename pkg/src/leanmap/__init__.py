"""Lightweight 2D pose-graph mapping and tracking."""

from .errors import LeanmapError
from .geometry import Pose2D, compose, compound_covariance, inverse_compose, smd
from .graph import Edge, EdgeKind, Huber, MaxMixture, NodeStatus, PoseGraph

__version__ = "0.1.0"

__all__ = [
    "Edge",
    "EdgeKind",
    "Huber",
    "LeanmapError",
    "MaxMixture",
    "NodeStatus",
    "Pose2D",
    "PoseGraph",
    "compose",
    "compound_covariance",
    "inverse_compose",
    "smd",
]
