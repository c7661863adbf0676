"""Command-line entry point.

Reports go to standard output as JSON lines; diagnostics, including the
resolved run configuration, go to standard error.  Exit codes: 0 on
success, 1 on a structured failure (bad data, unreadable file), 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backend import metric_arps, metric_t_rel, optimize
from .errors import LeanmapError
from .geometry import Pose2D
from .io.config import RunConfig
from .io.g2o import graph_from_record, read_g2o, write_g2o
from .io.report import StageReport, write_reports
from .io.svg import emit_svg
from .pipeline import (
    PIPELINE_STAGES,
    raw_odometry_trajectory,
    run_pipeline,
    run_track_replay,
    track_report,
)

log = logging.getLogger("leanmap")


class UsageError(Exception):
    pass


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--cell-size", type=float, help="grid cell side in meters (default 1.0)")
    p.add_argument("--s", type=float, help="information/geometry balance in [0, 1] (default 0.5)")
    p.add_argument("--weight-mode", choices=["node", "edge"], help="pruning weight source (default edge)")
    p.add_argument("--submap", type=float, help="tracker submap side in meters (default 10)")
    p.add_argument("--window", type=int, help="unregistered-frame window M (default 5)")
    p.add_argument("--huber", type=float, help="Huber threshold on whitened residuals (default 1.0)")
    p.add_argument("--max-iter", type=int, help="optimizer iteration cap (default 100)")
    p.add_argument("--tol", type=float, help="relative cost-change tolerance (default 1e-9)")
    p.add_argument("--deadline-ms", type=float, help="tracker deadline in milliseconds (default 50)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out", type=Path, help="write the resulting graph (or the track log) here")
    p.add_argument("--svg", type=Path, help="write a trajectory plot here")
    p.add_argument("--single-thread", action="store_true", help="run the back-end serially")
    p.add_argument("--reference", type=Path, help="g2o file whose vertices are ground truth")
    p.add_argument("--timing", action="store_true", help="fill elapsed_ms (makes reports non-reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leanmap", description="2D pose-graph mapping toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    p = sub.add_parser("optimize", parents=[common], help="robust pose-graph optimization")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("prune", parents=[common], help="grid pruning, sparsification and re-optimization")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("track", parents=[common], help="replay odometry through the tracker")
    p.add_argument("dataset", type=Path)
    p.add_argument("--delays", default="zero",
                   help="synthetic elapsed ms per step: zero, inf, alternate or a comma list (cycled)")

    p = sub.add_parser("metrics", parents=[common], help="ARPS and t_rel between two maps")
    p.add_argument("original", type=Path)
    p.add_argument("estimate", type=Path)

    p = sub.add_parser("plot", parents=[common], help="plot the vertices of one or more g2o files")
    p.add_argument("datasets", type=Path, nargs="+")

    p = sub.add_parser("pipeline", parents=[common], help="full mapping pipeline")
    p.add_argument("dataset", type=Path)
    p.add_argument("--track", action="store_true", help="replay odometry through the tracker first")
    p.add_argument("--delays", default="zero", help="delay schedule for --track")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    try:
        return RunConfig().with_overrides(
            cell_size=args.cell_size,
            s=args.s,
            weight_mode=args.weight_mode,
            submap_side=args.submap,
            window=args.window,
            huber_delta=args.huber,
            max_iter=args.max_iter,
            tol=args.tol,
            deadline_ms=args.deadline_ms,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _vertices(path: Path) -> dict[int, Pose2D]:
    return {v[0]: Pose2D(v[1], v[2], v[3]) for v in read_g2o(path).vertices}


def _ordered(poses: dict[int, Pose2D]) -> list[Pose2D]:
    return [poses[i] for i in sorted(poses)]


def cmd_optimize(args, config: RunConfig, out) -> None:
    record = read_g2o(args.dataset)
    graph = graph_from_record(record)
    before = _ordered(graph.poses())
    res = optimize(graph, max_iter=config.max_iter, tol=config.tol, huber_delta=config.huber_delta)
    reference = _vertices(args.reference) if args.reference else None
    t_rel = None
    if reference is not None:
        ids = [i for i in graph.live_ids() if i in reference]
        t_rel = metric_t_rel([graph.nodes[i].pose for i in ids], [reference[i] for i in ids])
    extra = {"iterations": res.iterations, "initial_cost": res.initial_cost,
             "final_cost": res.final_cost, "converged": res.converged}
    write_reports([StageReport("optimize", graph.num_nodes, graph.num_edges, t_rel_m=t_rel, extra=extra)], out)
    if args.out:
        args.out.write_text(write_g2o(graph))
    if args.svg:
        emit_svg([("input", before), ("optimized", _ordered(graph.poses()))], args.svg)


def _pipeline(args, config: RunConfig, out, track: bool) -> None:
    record = read_g2o(args.dataset)
    reference = _vertices(args.reference) if args.reference else None
    stages = [s for s in PIPELINE_STAGES if track or s != "track"]
    print("stages: " + " -> ".join(stages), file=sys.stderr)
    result = run_pipeline(record, config, reference, timing=args.timing, track=track,
                          delays=getattr(args, "delays", None), threaded=not args.single_thread)
    write_reports(result.reports, out)
    if args.out:
        args.out.write_text(write_g2o(result.graph))
    if args.svg:
        emit_svg([("original", _ordered(result.original)), ("pruned", _ordered(result.graph.poses()))], args.svg)


def cmd_track(args, config: RunConfig, out) -> None:
    record = read_g2o(args.dataset)
    reference = _vertices(args.reference) if args.reference else None
    entries = run_track_replay(record, config, args.delays, threaded=not args.single_thread)
    raw = raw_odometry_trajectory(record)
    lines = "".join(json.dumps(e.as_dict()) + "\n" for e in entries)
    if args.out:
        args.out.write_text(lines)
    else:
        out.write(lines)
    write_reports([track_report(entries, reference, raw)], out)
    if args.svg:
        series = [("raw odometry", raw), ("tracked", [e.pose for e in entries])]
        if reference is not None:
            series.insert(0, ("reference", _ordered(reference)))
        emit_svg(series, args.svg)


def cmd_metrics(args, config: RunConfig, out) -> None:
    original = _vertices(args.original)
    estimate = _vertices(args.estimate)
    shared = sorted(set(original) & set(estimate))
    arps = metric_arps(original, estimate)
    t_rel = metric_t_rel([estimate[i] for i in shared], [original[i] for i in shared])
    write_reports([StageReport("metrics", len(estimate), 0, arps_pct=arps, t_rel_m=t_rel,
                               extra={"shared_nodes": len(shared)})], out)


def cmd_plot(args, config: RunConfig, out) -> None:
    if not args.svg:
        raise UsageError("plot needs --svg <path>")
    emit_svg([(p.stem, _ordered(_vertices(p))) for p in args.datasets], args.svg)


COMMANDS = {
    "optimize": cmd_optimize,
    "prune": lambda a, c, o: _pipeline(a, c, o, track=False),
    "pipeline": lambda a, c, o: _pipeline(a, c, o, track=a.track),
    "track": cmd_track,
    "metrics": cmd_metrics,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = resolve_config(args)
        print("config: " + config.to_json(), file=sys.stderr)
        COMMANDS[args.command](args, config, sys.stdout)
    except UsageError as exc:
        print(f"leanmap {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"leanmap: error: {exc.strerror or exc}: {name}", file=sys.stderr)
        return 1
    except LeanmapError as exc:
        print(f"leanmap: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
