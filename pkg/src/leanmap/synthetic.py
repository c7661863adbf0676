"""Seeded synthetic datasets with known ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2D, compose, inverse_compose
from .graph import Edge, EdgeKind, MaxMixture, NodeSource, PoseGraph
from .io.g2o import DatasetRecord, info_to_upper


@dataclass
class SyntheticData:
    record: DatasetRecord
    truth: list[Pose2D]
    odometry_sigma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    extra: dict = field(default_factory=dict)


def _noisy(rng: np.random.Generator, z: Pose2D, sigma) -> Pose2D:
    sx, sy, st = sigma
    return Pose2D(z.x + rng.normal(0.0, sx) if sx else z.x,
                  z.y + rng.normal(0.0, sy) if sy else z.y,
                  z.theta + rng.normal(0.0, st) if st else z.theta)


def _info(sigma, floor: float = 1e-6) -> np.ndarray:
    return np.diag([1.0 / max(s, floor) ** 2 for s in sigma])


def _dead_reckoning(start: Pose2D, increments: list[Pose2D]) -> list[Pose2D]:
    out = [start]
    for z in increments:
        out.append(compose(out[-1], z))
    return out


def loop_trajectory(steps: int = 500, sigma_xy: float = 0.02, sigma_theta: float = math.radians(0.5),
                    loop_every: int = 50, radius: float = 8.0, loop_sigma: float = 0.01,
                    seed: int = 0) -> SyntheticData:
    """Repeated circular laps of ``loop_every`` steps with a closure at each lap end.

    Node ``k`` (a multiple of ``loop_every``) gets a loop edge from the
    start node, whose position it revisits.  Vertices hold dead reckoning.
    """
    rng = np.random.default_rng(seed)
    dtheta = 2.0 * math.pi / loop_every
    chord = 2.0 * radius * math.sin(dtheta / 2.0)
    step = Pose2D(chord * math.cos(dtheta / 2.0), chord * math.sin(dtheta / 2.0), dtheta)
    truth = _dead_reckoning(Pose2D(0.0, -radius, 0.0), [step] * steps)
    odo_sigma = (sigma_xy, sigma_xy, sigma_theta)
    loop_sig = (loop_sigma, loop_sigma, loop_sigma / 4.0)
    odo = [_noisy(rng, inverse_compose(truth[k], truth[k + 1]), odo_sigma) for k in range(steps)]
    est = _dead_reckoning(truth[0], odo)

    rec = DatasetRecord()
    rec.vertices = [(k, p.x, p.y, p.theta) for k, p in enumerate(est)]
    up = info_to_upper(_info(odo_sigma))
    rec.edges = [(k, k + 1, z.x, z.y, z.theta, up) for k, z in enumerate(odo)]
    lup = info_to_upper(_info(loop_sig))
    for k in range(loop_every, steps + 1, loop_every):
        z = _noisy(rng, inverse_compose(truth[0], truth[k]), loop_sig)
        rec.edges.append((0, k, z.x, z.y, z.theta, lup))
    return SyntheticData(rec, truth, odo_sigma)


def manhattan_world(n_poses: int = 3500, extent: int = 20, sigma_xy: float = 0.01,
                    sigma_theta: float = 0.005, loop_probability: float = 0.6,
                    seed: int = 0) -> SyntheticData:
    """Grid random walk with unit steps, in the style of the Manhattan benchmarks.

    Revisits of an earlier integer position produce loop closures (with
    probability ``loop_probability`` per revisited node, at most three per
    pose).  Vertices hold dead reckoning of the noisy odometry.
    """
    rng = np.random.default_rng(seed)
    headings = [0.0, math.pi / 2, math.pi, -math.pi / 2]
    pos = (0, 0)
    h = 0
    truth = [Pose2D(0.0, 0.0, 0.0)]
    visits: dict[tuple[int, int], list[int]] = {pos: [0]}
    for _ in range(1, n_poses):
        r = rng.random()
        turn = 0 if r < 0.7 else (1 if r < 0.85 else -1)
        for attempt in range(4):
            cand = (h + turn) % 4
            dx = round(math.cos(headings[cand]))
            dy = round(math.sin(headings[cand]))
            nxt = (pos[0] + dx, pos[1] + dy)
            if abs(nxt[0]) <= extent and abs(nxt[1]) <= extent:
                break
            turn = turn + 1 if attempt < 3 else 2
        h = cand
        pos = nxt
        truth.append(Pose2D(float(pos[0]), float(pos[1]), headings[h]))
        visits.setdefault(pos, []).append(len(truth) - 1)

    odo_sigma = (sigma_xy, sigma_xy, sigma_theta)
    odo = [_noisy(rng, inverse_compose(truth[k], truth[k + 1]), odo_sigma) for k in range(n_poses - 1)]
    est = _dead_reckoning(truth[0], odo)
    rec = DatasetRecord()
    rec.vertices = [(k, p.x, p.y, p.theta) for k, p in enumerate(est)]
    up = info_to_upper(_info(odo_sigma))
    rec.edges = [(k, k + 1, z.x, z.y, z.theta, up) for k, z in enumerate(odo)]
    for k in range(n_poses):
        key = (round(truth[k].x), round(truth[k].y))
        earlier = [j for j in visits[key] if j < k - 1]
        picked = [j for j in earlier if rng.random() < loop_probability][:3]
        for j in picked:
            z = _noisy(rng, inverse_compose(truth[j], truth[k]), odo_sigma)
            rec.edges.append((j, k, z.x, z.y, z.theta, up))
    return SyntheticData(rec, truth, odo_sigma)


def random_loop_graph(n: int, seed: int, sigma: tuple[float, float, float] = (0.05, 0.05, 0.02),
                      chords: int = 1, init_sigma: float = 0.1) -> tuple[PoseGraph, list[Pose2D]]:
    """Ring of ``n`` poses with noisy odometry, a closing edge and random chords.

    Initial estimates are ground truth plus Gaussian perturbation.
    """
    rng = np.random.default_rng(seed)
    truth = [Pose2D(0.0, 0.0, 0.0)]
    for k in range(1, n):
        ang = 2.0 * math.pi * k / n
        truth.append(Pose2D(3.0 * math.sin(ang) + rng.normal(0, 0.2),
                            3.0 - 3.0 * math.cos(ang) + rng.normal(0, 0.2),
                            ang + rng.normal(0, 0.1)))
    g = PoseGraph()
    for k, p in enumerate(truth):
        init = p if k == 0 else Pose2D(p.x + rng.normal(0, init_sigma), p.y + rng.normal(0, init_sigma),
                                      p.theta + rng.normal(0, init_sigma / 2))
        g.add_node(init, source=NodeSource.SYNTHETIC)
    info = _info(sigma)
    for k in range(n - 1):
        g.add_edge(Edge(k, k + 1, EdgeKind.ODOMETRY, _noisy(rng, inverse_compose(truth[k], truth[k + 1]), sigma), info))
    pairs = [(n - 1, 0)]
    for _ in range(chords):
        a, b = sorted(rng.choice(n, size=2, replace=False).tolist())
        if b - a > 1:
            pairs.append((a, b))
    for a, b in pairs:
        g.add_edge(Edge(a, b, EdgeKind.LOOP_LIDAR, _noisy(rng, inverse_compose(truth[a], truth[b]), sigma), info))
    return g, truth


def add_outlier_loop(graph: PoseGraph, a: int, b: int, offset: float = 10.0, seed: int = 0,
                     null_weight: float = 0.1) -> int:
    """Plant a max-mixture loop whose measurement is ``offset`` meters off the truth."""
    rng = np.random.default_rng(seed)
    direction = rng.uniform(-math.pi, math.pi)
    rel = graph.relative_pose(a, b)
    z = Pose2D(rel.x + offset * math.cos(direction), rel.y + offset * math.sin(direction), rel.theta)
    info = np.diag([400.0, 400.0, 2500.0])
    kernel = MaxMixture.null_hypothesis(z, info, null_weight=null_weight)
    return graph.add_edge(Edge(a, b, EdgeKind.LOOP_LIDAR, z, info, kernel))


def two_camera_graph(steps: int = 30, seed: int = 0, sigma: tuple[float, float, float] = (0.03, 0.03, 0.01),
                     zero_constraints: bool = True) -> tuple[PoseGraph, list[tuple[int, int]]]:
    """Two synchronized camera chains observing the same body trajectory.

    Camera A frames have even ids, camera B odd ids; each chain has its own
    independent odometry noise.  With ``zero_constraints`` every
    synchronized pair is tied by a zero-constraint edge, otherwise only the
    first pair is linked by an ordinary measured edge.  Returns the graph
    and the synchronized pairs.
    """
    rng = np.random.default_rng(seed)
    truth = [Pose2D(0.0, 0.0, 0.0)]
    for k in range(1, steps):
        truth.append(compose(truth[-1], Pose2D(0.5, 0.0, rng.normal(0.0, 0.2))))
    g = PoseGraph()
    pairs = []
    for k, p in enumerate(truth):
        a = g.add_node(p, source=NodeSource.VISUAL)
        b = g.add_node(p, source=NodeSource.VISUAL)
        pairs.append((a, b))
    info = _info(sigma)
    for k in range(steps - 1):
        for cam in (0, 1):
            u, v = pairs[k][cam], pairs[k + 1][cam]
            z = _noisy(rng, inverse_compose(truth[k], truth[k + 1]), sigma)
            g.add_edge(Edge(u, v, EdgeKind.ODOMETRY, z, info))
    if zero_constraints:
        for a, b in pairs:
            g.add_zero_constraint(a, b)
    else:
        g.add_edge(Edge(pairs[0][0], pairs[0][1], EdgeKind.LOOP_VISUAL, Pose2D.identity(), np.eye(3) * 1e4))
    return g, pairs
