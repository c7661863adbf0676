import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from leanmap.backend import graph_cost, information_matrix, optimize, selected_components
from leanmap.errors import DisconnectedGraphError, UnderconstrainedError
from leanmap.geometry import Pose2D, compose
from leanmap.graph import Edge, EdgeKind, Huber, MaxMixture, PoseGraph
from leanmap.synthetic import add_outlier_loop, random_loop_graph


def as_oracle(graph: PoseGraph, huber=1.0):
    ids = graph.live_ids()
    idx = {n: k for k, n in enumerate(ids)}
    poses = [graph.nodes[n].pose.as_array() for n in ids]
    edges = []
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        robust = e.kind.is_loop or isinstance(e.kernel, Huber)
        edges.append((idx[e.src], idx[e.dst], tuple(e.measurement.as_array()), e.information, robust))
    return poses, edges


def pose_matrix(graph):
    return np.array([graph.nodes[n].pose.as_array() for n in graph.live_ids()])


def chain(n=5, step=Pose2D(1.0, 0.0, 0.3)):
    g = PoseGraph()
    truth = [Pose2D()]
    for _ in range(n - 1):
        truth.append(compose(truth[-1], step))
    for k, p in enumerate(truth):
        g.add_node(Pose2D(p.x + 0.3 * k, p.y - 0.1 * k, p.theta))
    for k in range(n - 1):
        g.add_edge(Edge(k, k + 1, EdgeKind.ODOMETRY, step, np.eye(3)))
    return g, truth


def test_zero_noise_chain_is_dead_reckoning():
    g, truth = chain()
    res = optimize(g)
    assert res.final_cost == pytest.approx(0.0, abs=1e-18)
    for n, p in zip(g.live_ids(), truth):
        assert np.allclose(g.nodes[n].pose.as_array(), p.as_array(), atol=1e-9)


def test_square_loop_matches_dense_oracle():
    g = PoseGraph()
    init = [(0, 0, 0), (1.1, 0.05, 1.5), (0.9, 1.1, 3.0), (-0.1, 0.9, -1.6)]
    for p in init:
        g.add_node(Pose2D(*p))
    zs = [(1.02, 0.01, math.pi / 2 + 0.01), (0.98, -0.02, math.pi / 2 - 0.02),
          (1.01, 0.03, math.pi / 2 + 0.015), (0.99, 0.0, math.pi / 2)]
    for k, z in enumerate(zs):
        kind = EdgeKind.ODOMETRY if k < 3 else EdgeKind.LOOP_LIDAR
        g.add_edge(Edge(k, (k + 1) % 4, kind, Pose2D(*z), np.diag([100.0, 100.0, 400.0])))
    poses, edges = as_oracle(g)
    expected = oracles.dense_solve(poses, edges, huber=1.0)
    optimize(g, tol=1e-14, max_iter=200)
    assert np.max(np.abs(pose_matrix(g) - expected)) < 1e-6


@settings(max_examples=25)
@given(st.integers(4, 8), st.integers(0, 10_000), st.integers(0, 2))
def test_random_graphs_match_dense_oracle(n, seed, chords):
    g, _ = random_loop_graph(n, seed, chords=chords)
    poses, edges = as_oracle(g)
    expected = oracles.dense_solve(poses, edges, huber=1.0)
    optimize(g, tol=1e-14, max_iter=200)
    got = pose_matrix(g)
    diff = got - expected
    diff[:, 2] = (diff[:, 2] + math.pi) % (2 * math.pi) - math.pi
    assert np.max(np.abs(diff)) < 1e-6


def test_huber_downweights_bad_loop():
    def build(robust):
        g, _ = random_loop_graph(6, 3, chords=0)
        rel = g.relative_pose(0, 3)
        kernel = Huber(1.0) if robust else None
        kind = EdgeKind.LOOP_LIDAR if robust else EdgeKind.ODOMETRY
        g.add_edge(Edge(0, 3, kind, Pose2D(rel.x + 3.0, rel.y, rel.theta), np.eye(3) * 400.0, kernel))
        optimize(g, tol=1e-14)
        return g
    robust, plain = build(True), build(False)
    ref, _ = random_loop_graph(6, 3, chords=0)
    optimize(ref, tol=1e-14)
    assert np.abs(pose_matrix(robust) - pose_matrix(ref)).max() < np.abs(pose_matrix(plain) - pose_matrix(ref)).max()


@pytest.mark.parametrize("seed", range(5))
def test_max_mixture_rejects_outlier(seed):
    g, _ = random_loop_graph(8, seed, chords=1)
    clean = g.copy()
    eid = add_outlier_loop(g, 1, 6, seed=seed)
    optimize(clean, tol=1e-14, max_iter=200)
    optimize(g, tol=1e-14, max_iter=200)
    assert selected_components(g)[eid] == 1
    assert np.max(np.abs(pose_matrix(g) - pose_matrix(clean))) < 1e-6


def test_max_mixture_dominance_post_hoc():
    g, _ = random_loop_graph(7, 11, chords=1)
    eid = add_outlier_loop(g, 0, 4, seed=2)
    optimize(g, tol=1e-14)
    e = g.edges[eid]
    from leanmap.geometry import pose_residual
    pred = g.relative_pose(e.src, e.dst)
    scores = []
    for c in e.kernel.components:
        r = pose_residual(c.measurement, pred)
        scores.append(float(r @ c.information @ r) - 2 * math.log(c.weight) - np.linalg.slogdet(c.information)[1])
    assert selected_components(g)[eid] == int(np.argmin(scores))


def test_max_mixture_inlier_kept_when_consistent():
    g, _ = random_loop_graph(6, 4, chords=0)
    rel = g.relative_pose(0, 3)
    kernel = MaxMixture.null_hypothesis(rel, np.eye(3) * 100.0)
    eid = g.add_edge(Edge(0, 3, EdgeKind.LOOP_LIDAR, rel, np.eye(3) * 100.0, kernel))
    assert selected_components(g)[eid] == 0


@settings(max_examples=25)
@given(st.integers(3, 10), st.integers(0, 10_000))
def test_cost_never_increases(n, seed):
    g, _ = random_loop_graph(n, seed, chords=2, init_sigma=0.5)
    before = graph_cost(g)
    res = optimize(g, max_iter=30)
    assert res.final_cost <= res.initial_cost + 1e-12
    assert res.initial_cost == pytest.approx(before)
    assert graph_cost(g) == pytest.approx(res.final_cost, rel=1e-9, abs=1e-12)


def test_gauge_fixed_and_nodes_marked():
    g, _ = random_loop_graph(5, 1)
    first = g.nodes[0].pose
    optimize(g)
    assert g.nodes[0].pose == first
    assert all(g.nodes[n].status.value == "optimized" for n in g.live_ids())


def test_explicit_gauge():
    g, _ = random_loop_graph(5, 1)
    p3 = g.nodes[3].pose
    assert optimize(g, gauge=3).gauge == 3
    assert g.nodes[3].pose == p3


def test_disconnected_graph():
    g, _ = chain(3)
    g.add_node(Pose2D(9, 9, 0))
    g.add_node(Pose2D(10, 9, 0))
    g.add_edge(Edge(3, 4, EdgeKind.ODOMETRY, Pose2D(1, 0, 0), np.eye(3)))
    with pytest.raises(DisconnectedGraphError, match="3"):
        optimize(g)


def test_singular_system():
    g = PoseGraph()
    g.add_node(Pose2D())
    g.add_node(Pose2D(1, 0, 0))
    g.add_edge(Edge(0, 1, EdgeKind.ODOMETRY, Pose2D(2, 0, 0), np.diag([1.0, 1.0, 0.0])))
    with pytest.raises(UnderconstrainedError):
        optimize(g)


def test_information_matrix_shape():
    g, _ = chain(4)
    h, ids = information_matrix(g)
    assert h.shape == (12, 12) and ids == [0, 1, 2, 3]
    dense = h.toarray()
    assert np.allclose(dense, dense.T)
