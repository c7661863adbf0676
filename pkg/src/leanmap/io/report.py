"""JSON-lines stage reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


@dataclass
class StageReport:
    stage: str
    nodes: int
    edges: int
    npc: float | None = None
    arps_pct: float | None = None
    t_rel_m: float | None = None
    elapsed_ms: float | None = None
    # command-specific values appended after the standard fields
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def write_reports(reports, stream) -> None:
    for r in reports:
        stream.write(r.to_json() + "\n")


def read_reports(text: str) -> list[StageReport]:
    names = {f.name for f in fields(StageReport)} - {"extra"}
    out = []
    for line in text.splitlines():
        if line.strip():
            d = json.loads(line)
            extra = {k: d.pop(k) for k in list(d) if k not in names}
            out.append(StageReport(**d, extra=extra))
    return out
