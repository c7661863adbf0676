"""Run configuration shared by the CLI commands."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from ..backend.pruning import WeightMode


@dataclass(frozen=True)
class RunConfig:
    cell_size: float = 1.0
    s: float = 0.5
    weight_mode: WeightMode = WeightMode.EDGE_INFO
    submap_side: float = 10.0
    window: int = 5
    huber_delta: float = 1.0
    max_iter: int = 100
    tol: float = 1e-9
    deadline_ms: float = 50.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weight_mode", WeightMode.parse(self.weight_mode))
        positive = ("cell_size", "submap_side", "window", "huber_delta", "max_iter", "tol")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {self.s!r}")
        if self.deadline_ms < 0:
            raise ValueError("deadline_ms must be non-negative")

    def with_overrides(self, **overrides) -> RunConfig:
        """Copy with the given fields replaced; ``None`` values are ignored."""
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["weight_mode"] = self.weight_mode.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict())
