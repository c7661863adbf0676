import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leanmap.backend import (
    information_matrix,
    make_temporal_node,
    marginal_covariances,
    metric_arps,
    metric_t_rel,
    register_all,
)
from leanmap.errors import InsufficientWindowError, NoComparableNodesError
from leanmap.geometry import Pose2D
from leanmap.graph import NodeStatus, PoseGraph
from leanmap.synthetic import random_loop_graph
from strategies import poses, psd_matrices


def window_graph(n=4, base_cov=None):
    g = PoseGraph()
    g.add_node(Pose2D(0, 0, 0), cov=np.zeros((3, 3)) if base_cov is None else base_cov,
               status=NodeStatus.OPTIMIZED)
    for k in range(1, n):
        g.add_node(Pose2D(float(k), 0.0, 0.0))
    return g


class TestTemporal:
    def test_identity_delta_copies_node(self):
        g = window_graph()
        f = make_temporal_node(g, 3, Pose2D(), np.zeros((3, 3)))
        assert f == 1
        assert g.nodes[1].pose == g.nodes[0].pose
        assert np.array_equal(g.nodes[1].cov, np.zeros((3, 3)))
        assert g.nodes[1].status is NodeStatus.TEMPORAL

    def test_single_term(self):
        g = window_graph()
        make_temporal_node(g, 2, Pose2D(1, 0, 0), np.eye(3))
        assert g.nodes[1].pose == Pose2D(1, 0, 0)
        assert np.allclose(g.nodes[1].cov, np.eye(3))

    def test_insufficient_window(self):
        g = window_graph(3)
        with pytest.raises(InsufficientWindowError):
            make_temporal_node(g, 3)

    def test_chained_registration(self):
        g = window_graph(5)
        make_temporal_node(g, 1, Pose2D(1, 0, 0), np.eye(3) * 0.1)
        f = make_temporal_node(g, 1, Pose2D(1, 0, 0), np.eye(3) * 0.1)
        assert f == 2 and g.nodes[2].pose == Pose2D(2, 0, 0)
        assert np.trace(g.nodes[2].cov) > np.trace(g.nodes[1].cov)

    @given(psd_matrices(), psd_matrices(), poses, poses)
    def test_covariance_grows(self, base, rel, start, delta):
        g = window_graph(2, base)
        g.nodes[0].pose = start
        make_temporal_node(g, 1, delta, rel)
        assert np.trace(g.nodes[1].cov) >= np.trace(base) - 1e-9

    def test_register_all_is_window_independent(self):
        a, _ = random_loop_graph(7, 2)
        b = a.copy()
        register_all(a, 1)
        register_all(b, 5)
        for n in a.live_ids():
            assert np.allclose(a.nodes[n].cov, b.nodes[n].cov)
            assert a.nodes[n].status is NodeStatus.TEMPORAL


class TestMarginals:
    def test_dense_inverse(self):
        g, _ = random_loop_graph(6, 5, chords=2)
        h, ids = information_matrix(g)
        dense = np.linalg.inv(h.toarray()[3:, 3:])
        covs = marginal_covariances(g)
        assert np.array_equal(covs[0], np.zeros((3, 3)))
        for k, nid in enumerate(ids[1:]):
            assert np.allclose(covs[nid], dense[3 * k: 3 * k + 3, 3 * k: 3 * k + 3], rtol=1e-9, atol=1e-14)

    def test_subset(self):
        g, _ = random_loop_graph(6, 5)
        full = marginal_covariances(g)
        part = marginal_covariances(g, ids=[4])
        assert list(part) == [4]
        assert np.allclose(part[4], full[4])


class TestMetrics:
    def test_t_rel_examples(self):
        gt = [Pose2D(k, 0, 0) for k in range(4)]
        assert metric_t_rel(gt, gt) == 0.0
        assert metric_t_rel([Pose2D(p.x + 3, p.y + 4, 0) for p in gt], gt) == pytest.approx(5.0)
        one = [Pose2D(1, 0, 0)] + gt[1:]
        assert metric_t_rel(one, gt) == pytest.approx(0.5)

    def test_t_rel_mismatch(self):
        with pytest.raises(ValueError):
            metric_t_rel([Pose2D()], [Pose2D(), Pose2D()])

    def test_arps_examples(self):
        ori = {k: Pose2D(k + 1.0, -k, 0.3) for k in range(5)}
        assert metric_arps(ori, ori) == 0.0
        doubled = {k: Pose2D(2 * p.x, 2 * p.y, p.theta) for k, p in ori.items()}
        assert metric_arps(ori, doubled) == pytest.approx(100.0)

    def test_arps_shared_ids_and_origin(self):
        ori = {0: Pose2D(0, 0, 0), 1: Pose2D(1, 0, 0), 2: Pose2D(0, 2, 0)}
        pru = {0: Pose2D(5, 5, 0), 1: Pose2D(1.1, 0, 0)}
        assert metric_arps(ori, pru) == pytest.approx(10.0)

    def test_arps_no_nodes(self):
        with pytest.raises(NoComparableNodesError):
            metric_arps({0: Pose2D()}, {0: Pose2D(1, 1, 0)})
        with pytest.raises(NoComparableNodesError):
            metric_arps({0: Pose2D(1, 0, 0)}, {1: Pose2D(1, 0, 0)})

    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=20),
           st.floats(0.1, 10))
    def test_arps_scaling(self, pts, scale):
        if all(math.hypot(x, y) < 1e-6 for x, y in pts):
            return
        a = [Pose2D(x, y, 0) for x, y in pts]
        b = [Pose2D(scale * x, scale * y, 0) for x, y in pts]
        assert metric_arps(a, b) == pytest.approx(abs(scale - 1) * 100, rel=1e-6, abs=1e-9)
