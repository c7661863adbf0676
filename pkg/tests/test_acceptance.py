"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Criteria 1-5 and 11 need the public CSAIL, FR079 and M3500 g2o files
(looked up in $LEANMAP_DATA, then ./data).  When a file is absent the
criterion fails rather than skips.
"""

import math
import time

import numpy as np
import pytest

import oracles
from conftest import find_dataset
from leanmap.backend import GridIndex, chow_liu_sparsify, optimize, prune_cells, register_all, selected_components
from leanmap.geometry import Pose2D, compose
from leanmap.graph import EdgeKind
from leanmap.io import RunConfig, graph_from_record, parse_g2o, read_g2o, write_g2o
from leanmap.pipeline import raw_odometry_trajectory, run_pipeline, run_track_replay, track_report
from leanmap.synthetic import add_outlier_loop, loop_trajectory, random_loop_graph, two_camera_graph
from leanmap.tracker import TrackerState, TrackMode, worst_case_predict

_RUNS: dict = {}


def pipeline_run(key):
    """(reports by stage, final graph, wall seconds) or None when the dataset is missing."""
    if key not in _RUNS:
        path = find_dataset(key)
        if path is None:
            _RUNS[key] = None
        else:
            t0 = time.perf_counter()
            res = run_pipeline(read_g2o(path), RunConfig())
            _RUNS[key] = ({r.stage: r for r in res.reports}, res.graph, time.perf_counter() - t0)
    return _RUNS[key]


def within(value, target, frac):
    return abs(value - target) <= frac * target


def missing(key):
    return f"{key} dataset not found (set LEANMAP_DATA or add data/{key}.g2o)"


def degree_p90(graph):
    return float(np.percentile([graph.degree(n) for n in graph.live_ids()], 90))


def test_criterion_01_csail(criterion):
    run = pipeline_run("csail")
    if run is None:
        criterion(1, False, missing("csail"))
    reps, _, secs = run
    m = reps["metrics"]
    ok = (within(m.nodes, 327, 0.2) and within(m.edges, 354, 0.2) and m.npc <= 2
          and m.arps_pct <= 5.0 and secs < 10.0)
    criterion(1, ok, f"nodes {m.nodes} (327), edges {m.edges} (354), npc {m.npc:.2f}, "
                     f"arps {m.arps_pct:.2f}%, {secs:.1f} s")


def test_criterion_02_fr079(criterion):
    run = pipeline_run("fr079")
    if run is None:
        criterion(2, False, missing("fr079"))
    m = run[0]["metrics"]
    criterion(2, within(m.nodes, 718, 0.2) and m.arps_pct <= 5.0,
              f"nodes {m.nodes} (718), arps {m.arps_pct:.2f}%")


def test_criterion_03_m3500(criterion):
    run = pipeline_run("m3500")
    if run is None:
        criterion(3, False, missing("m3500"))
    m = run[0]["metrics"]
    ok = within(m.nodes, 1113, 0.2) and within(m.edges, 1762, 0.25) and m.arps_pct <= 10.0
    criterion(3, ok, f"nodes {m.nodes} (1113), edges {m.edges} (1762), arps {m.arps_pct:.2f}%")


def prune_speedup(record):
    graph = graph_from_record(record)
    register_all(graph, 5)
    optimize(graph)
    times = {}
    for mode in ("edge", "node"):
        g = graph.copy()
        grid = GridIndex.from_graph(g, 1.0)
        t0 = time.perf_counter()
        prune_cells(g, grid, 0.5, mode)
        times[mode] = time.perf_counter() - t0
    return times["node"] / times["edge"], times


@pytest.mark.slow
def test_criterion_04_edge_weight_speed(criterion):
    path = find_dataset("m3500")
    if path is None:
        criterion(4, False, missing("m3500"))
    ratio, times = prune_speedup(read_g2o(path))
    criterion(4, ratio >= 10.0, f"node {times['node'] * 1e3:.0f} ms / edge {times['edge'] * 1e3:.0f} ms = {ratio:.1f}x")


def test_criterion_05_commercial(criterion):
    details, ok = [], True
    for key in ("csail", "fr079", "m3500"):
        run = pipeline_run(key)
        if run is None:
            ok = False
            details.append(f"{key}: missing")
            continue
        reps, graph, _ = run
        m = reps["metrics"]
        p90 = degree_p90(graph)
        ok &= m.npc <= 2 and p90 <= 3 and m.arps_pct < 10.0
        details.append(f"{key}: npc {m.npc:.2f}, deg p90 {p90:.0f}, arps {m.arps_pct:.2f}%")
    criterion(5, ok, "; ".join(details))


def test_criterion_06_fallback_algebra(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    state = TrackerState.start(Pose2D())
    for _ in range(10_000):
        dT, t_k, step = (Pose2D(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi)) for _ in range(3))
        state.last_corrected = compose(dT, t_k)
        state.last_odometry = t_k
        t_next = compose(t_k, step)
        lhs = worst_case_predict(state, t_next).as_array()
        rhs = np.array(oracles.oplus(dT.as_array(), t_next.as_array()))
        d = lhs - rhs
        d[2] = math.remainder(d[2], 2 * math.pi)
        worst = max(worst, float(np.abs(d).max()))
    data = loop_trajectory(steps=500, seed=0)
    entries = run_track_replay(data.record, RunConfig(), "inf")
    raw = raw_odometry_trajectory(data.record)
    delta = compose(entries[0].pose, raw[0].inverse())
    dev = max(math.hypot(*(compose(delta, r).as_array()[:2] - e.pose.as_array()[:2])) for e, r in zip(entries, raw))
    all_fallback = all(e.mode is TrackMode.FALLBACK for e in entries[1:])
    criterion(6, worst <= 1e-9 and dev <= 1e-9 and all_fallback,
              f"identity max err {worst:.1e}, all-fallback rigid deviation {dev:.1e} m")


def _as_oracle(graph):
    ids = graph.live_ids()
    idx = {n: k for k, n in enumerate(ids)}
    edges = [(idx[e.src], idx[e.dst], tuple(e.measurement.as_array()), e.information, e.kind.is_loop)
             for _, e in sorted(graph.edges.items())]
    return [graph.nodes[n].pose.as_array() for n in ids], edges


def _poses(graph):
    return np.array([graph.nodes[n].pose.as_array() for n in graph.live_ids()])


def _angle_diff(a, b):
    d = a - b
    d[:, 2] = (d[:, 2] + math.pi) % (2 * math.pi) - math.pi
    return float(np.abs(d).max())


def test_criterion_07_optimizer_oracle(criterion):
    worst = 0.0
    for seed in range(40):
        n = 3 + seed % 6
        g, _ = random_loop_graph(n, seed, chords=seed % 3)
        poses, edges = _as_oracle(g)
        expected = oracles.dense_solve(poses, edges, huber=1.0)
        optimize(g, tol=1e-14, max_iter=200)
        worst = max(worst, _angle_diff(_poses(g), expected))
    rejected = 0
    for seed in range(100):
        g, _ = random_loop_graph(8, 1000 + seed, chords=1)
        clean = g.copy()
        a, b = sorted(np.random.default_rng(seed).choice(8, 2, replace=False).tolist())
        eid = add_outlier_loop(g, a, b, offset=10.0, seed=seed)
        optimize(clean, tol=1e-14, max_iter=200)
        optimize(g, tol=1e-14, max_iter=200)
        if selected_components(g)[eid] == 1 and _angle_diff(_poses(g), _poses(clean)) <= 1e-6:
            rejected += 1
    criterion(7, worst <= 1e-6 and rejected >= 95,
              f"oracle max deviation {worst:.1e}, outlier rejected in {rejected}/100")


def test_criterion_08_tracker_improvement(criterion):
    data = loop_trajectory(steps=500, sigma_xy=0.02, sigma_theta=math.radians(0.5), loop_every=50, seed=0)
    raw = raw_odometry_trajectory(data.record)
    out = {}
    for schedule in ("zero", "alternate"):
        entries = run_track_replay(data.record, RunConfig(), schedule)
        out[schedule] = track_report(entries, data.truth, raw)
    base = out["zero"].extra["raw_t_rel_m"]
    r_full = out["zero"].t_rel_m / base
    r_mixed = out["alternate"].t_rel_m / base
    mixed_share = out["alternate"].extra["fallback_steps"] / 500
    criterion(8, r_full <= 0.5 and r_mixed <= 0.8 and mixed_share == 0.5,
              f"raw {base:.3f} m, tracked ratio {r_full:.3f}, 50% fallback ratio {r_mixed:.3f}")


def test_criterion_09_chow_liu(criterion):
    from test_sparsify import graph_with_loops, removable
    from leanmap.backend import UnionFind
    from leanmap.graph import information_weight

    rng = np.random.default_rng(9)
    checked, ok = 0, True
    for _ in range(300):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 8))
        loops = []
        for _ in range(m):
            u, v = rng.choice(n, 2, replace=False).tolist()
            loops.append((float(rng.uniform(0.1, 50)), u, v))
        g = graph_with_loops(n, loops)
        weights = [(information_weight(e.information), e.src, e.dst) for e in removable(g)]
        best = oracles.spanning_trees_max_weight(list(range(n)), weights)
        chow_liu_sparsify(g)
        kept = removable(g)
        total = sum(information_weight(e.information) for e in kept)
        uf = UnionFind()
        for _, u, v in loops:
            uf.union(u, v)
        touched = {x for _, u, v in loops for x in (u, v)}
        n_comp = len({uf.find(x) for x in touched})
        ok &= math.isclose(total, best, rel_tol=1e-12) and len(kept) == len(touched) - n_comp
        checked += 1
    criterion(9, ok, f"{checked} random graphs with <= 7 removable edges match exhaustive maximum")


def test_criterion_10_zero_constraints(criterion):
    def pair_error(zero):
        g, pairs = two_camera_graph(steps=30, seed=10, zero_constraints=zero)
        optimize(g, tol=1e-14, max_iter=200)
        worst = 0.0
        for a, b in pairs:
            r = g.relative_pose(a, b).as_array()
            worst = max(worst, float(np.abs(r).max()))
        return worst, g

    with_zc, g = pair_error(True)
    without, _ = pair_error(False)
    n_zc = sum(e.kind is EdgeKind.ZERO_CONSTRAINT for e in g.edges.values())
    criterion(10, with_zc <= 1e-6 and without > 1e-3 and n_zc == 30,
              f"pair error with zero-constraints {with_zc:.1e}, without {without:.1e}")


def test_criterion_11_round_trip(criterion):
    details, ok = [], True
    for key in ("csail", "fr079", "m3500"):
        path = find_dataset(key)
        if path is None:
            ok = False
            details.append(f"{key}: missing")
            continue
        first = read_g2o(path)
        second = parse_g2o(write_g2o(first))
        third = parse_g2o(write_g2o(second))
        flat = lambda r: np.array([(*e[:5], *e[5]) for e in r.edges])  # noqa: E731
        err = max(float(np.abs(np.array(first.vertices) - np.array(second.vertices)).max()),
                  float(np.abs(flat(first) - flat(second)).max()))
        fixed = write_g2o(second) == write_g2o(third)
        ok &= err <= 1e-9 and fixed
        details.append(f"{key}: max err {err:.1e}")
    criterion(11, ok, "; ".join(details))
