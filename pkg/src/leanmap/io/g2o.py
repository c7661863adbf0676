"""Reader and writer for the 2D g2o text format (VERTEX_SE2 / EDGE_SE2)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import G2OParseError
from ..geometry import Pose2D
from ..graph import Edge, EdgeKind, NodeSource, NodeStatus, PoseGraph, repair_information

Vertex = tuple[int, float, float, float]
# (from, to, dx, dy, dtheta, (i11, i12, i13, i22, i23, i33))
EdgeRow = tuple[int, int, float, float, float, tuple[float, float, float, float, float, float]]

_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@dataclass
class DatasetRecord:
    vertices: list[Vertex] = field(default_factory=list)
    edges: list[EdgeRow] = field(default_factory=list)


def info_from_upper(upper) -> np.ndarray:
    m = np.zeros((3, 3))
    for (r, c), v in zip(_UPPER, upper):
        m[r, c] = m[c, r] = v
    return m


def info_to_upper(info) -> tuple[float, ...]:
    info = np.asarray(info, dtype=float)
    return tuple(float(0.5 * (info[r, c] + info[c, r])) for r, c in _UPPER)


def _number(tok: str, line_no: int, integer: bool = False):
    try:
        return int(tok) if integer else float(tok)
    except ValueError:
        raise G2OParseError("malformed number", line_no, tok) from None


def parse_g2o(text: str) -> DatasetRecord:
    """Parse g2o 2D text. Blank lines and ``#`` comments are ignored."""
    record = DatasetRecord()
    seen: set[int] = set()
    pending: list[tuple[int, int, int]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = line.split()
        if not toks:
            continue
        tag = toks[0]
        if tag == "VERTEX_SE2":
            if len(toks) != 5:
                raise G2OParseError(f"VERTEX_SE2 expects 4 values, got {len(toks) - 1}", line_no, tag)
            vid = _number(toks[1], line_no, integer=True)
            if vid in seen:
                raise G2OParseError("duplicate vertex id", line_no, toks[1])
            seen.add(vid)
            x, y, th = (_number(t, line_no) for t in toks[2:])
            record.vertices.append((vid, x, y, th))
        elif tag == "EDGE_SE2":
            if len(toks) != 12:
                raise G2OParseError(f"EDGE_SE2 expects 11 values, got {len(toks) - 1}", line_no, tag)
            a = _number(toks[1], line_no, integer=True)
            b = _number(toks[2], line_no, integer=True)
            dx, dy, dth = (_number(t, line_no) for t in toks[3:6])
            upper = tuple(_number(t, line_no) for t in toks[6:12])
            record.edges.append((a, b, dx, dy, dth, upper))
            pending.append((line_no, a, b))
        else:
            raise G2OParseError("unsupported tag", line_no, tag)
    # vertices may legally follow the edges that use them
    for line_no, a, b in pending:
        for v in (a, b):
            if v not in seen:
                raise G2OParseError(f"edge references unknown vertex {v}", line_no, str(v))
    return record


def read_g2o(path: str | Path) -> DatasetRecord:
    return parse_g2o(Path(path).read_text())


def _fmt(v: float) -> str:
    # 12 significant digits unless that would lose information
    s = format(v, ".12g")
    return s if float(s) == v else repr(float(v))


def _vertex_line(vid: int, x: float, y: float, th: float) -> str:
    return f"VERTEX_SE2 {vid} {_fmt(x)} {_fmt(y)} {_fmt(th)}"


def _edge_line(a: int, b: int, dx: float, dy: float, dth: float, upper) -> str:
    vals = " ".join(_fmt(v) for v in (dx, dy, dth, *upper))
    return f"EDGE_SE2 {a} {b} {vals}"


def write_g2o(source: PoseGraph | DatasetRecord) -> str:
    """Serialize a graph (non-pruned nodes and their edges) or a record."""
    lines = []
    if isinstance(source, DatasetRecord):
        lines.extend(_vertex_line(*v) for v in source.vertices)
        lines.extend(_edge_line(*e) for e in source.edges)
    else:
        for node in source.live_nodes():
            lines.append(_vertex_line(node.id, node.pose.x, node.pose.y, node.pose.theta))
        for eid in sorted(source.edges):
            e = source.edges[eid]
            z = e.measurement
            lines.append(_edge_line(e.src, e.dst, z.x, z.y, z.theta, info_to_upper(e.information)))
    return "".join(line + "\n" for line in lines)


def record_from_graph(graph: PoseGraph) -> DatasetRecord:
    return parse_g2o(write_g2o(graph))


def graph_from_record(record: DatasetRecord, status: NodeStatus = NodeStatus.UNREGISTERED) -> PoseGraph:
    """Build a pose graph; edges between consecutive ids become odometry, the rest loops."""
    graph = PoseGraph()
    for vid, x, y, th in sorted(record.vertices):
        graph.add_node(Pose2D(x, y, th), source=NodeSource.LIDAR, node_id=vid, status=status)
    for a, b, dx, dy, dth, upper in record.edges:
        kind = EdgeKind.ODOMETRY if abs(a - b) == 1 else EdgeKind.LOOP_LIDAR
        info = repair_information(info_from_upper(upper))
        graph.add_edge(Edge(a, b, kind, Pose2D(dx, dy, dth), info))
    return graph


def load_graph(path: str | Path) -> PoseGraph:
    return graph_from_record(read_g2o(path))
