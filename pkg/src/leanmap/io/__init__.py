"""Dataset, configuration, plot and report I/O."""

from .config import RunConfig
from .g2o import DatasetRecord, graph_from_record, load_graph, parse_g2o, read_g2o, write_g2o
from .report import StageReport, read_reports, write_reports
from .svg import EmptyTrajectoryError, emit_svg, render_svg

__all__ = [
    "DatasetRecord",
    "EmptyTrajectoryError",
    "RunConfig",
    "StageReport",
    "emit_svg",
    "graph_from_record",
    "load_graph",
    "parse_g2o",
    "read_g2o",
    "read_reports",
    "render_svg",
    "write_g2o",
    "write_reports",
]
