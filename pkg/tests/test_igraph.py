import time

import numpy as np
import pytest

from buddy.igraph import (
    GraphError,
    GraphFeature,
    edge_length,
    edge_mid_height,
    edge_rel_xy,
    full_graph,
    load_trace,
    make_trace,
    pair_features,
    reconstruct_partner,
    save_trace,
)
from buddy.skeleton import Pose, yaw_matrix


def random_pose(rng, n):
    return Pose(rng.normal(scale=1.2, size=(n, 3)))


class TestFullGraph:
    def test_22_nodes_yield_484_edges(self):
        rng = np.random.default_rng(0)
        g = full_graph(random_pose(rng, 22), random_pose(rng, 22))
        assert g.edge_count == 484
        assert g.features.shape == (484, 6)

    def test_rel_and_mid(self):
        a = Pose(np.array([[0.0, 0.0, 0.0]]))
        b = Pose(np.array([[0.0, 0.0, 2.0]]))
        g = full_graph(a, b)
        np.testing.assert_array_equal(g.features[0, :3], [0, 0, 2])
        np.testing.assert_array_equal(g.features[0, 3:], [0, 0, 1])

    def test_coincident_nodes(self):
        p = np.array([[0.3, -0.4, 1.0]])
        g = full_graph(Pose(p), Pose(p))
        np.testing.assert_array_equal(g.features[0, :3], [0, 0, 0])
        np.testing.assert_array_equal(g.features[0, 3:], p[0])

    def test_row_major_ordering(self):
        rng = np.random.default_rng(1)
        g = full_graph(random_pose(rng, 3), random_pose(rng, 4))
        np.testing.assert_array_equal(g.i_idx, np.repeat(np.arange(3), 4))
        np.testing.assert_array_equal(g.j_idx, np.tile(np.arange(4), 3))

    def test_translation_moves_mid_only(self):
        # Mathematically rel is unchanged and mid shifts by t; in floating
        # point (x+t)-(y+t) differs from x-y in the last ulps, so assert at
        # 1e-12 rather than bitwise.
        rng = np.random.default_rng(2)
        pa, pb = random_pose(rng, 5), random_pose(rng, 6)
        t = np.array([0.5, -2.0, 3.0])
        g0 = full_graph(pa, pb)
        g1 = full_graph(Pose(pa.positions + t), Pose(pb.positions + t))
        np.testing.assert_allclose(g1.features[:, :3], g0.features[:, :3], atol=1e-12)
        np.testing.assert_allclose(g1.features[:, 3:], g0.features[:, 3:] + t, atol=1e-12)

    def test_lengths_invariant_under_rigid_transform(self):
        rng = np.random.default_rng(3)
        pa, pb = random_pose(rng, 4), random_pose(rng, 4)
        rot = yaw_matrix(1.234)
        t = np.array([1.0, 2.0, -0.5])
        g0 = full_graph(pa, pb)
        g1 = full_graph(Pose((rot @ pa.positions.T).T + t), Pose((rot @ pb.positions.T).T + t))
        np.testing.assert_allclose(edge_length(g1.features), edge_length(g0.features),
                                   rtol=1e-12)

    def test_linear_runtime_scaling(self):
        rng = np.random.default_rng(4)
        pa, pb = random_pose(rng, 22), random_pose(rng, 22)
        t0 = time.perf_counter()
        for _ in range(1000):
            full_graph(pa, pb)
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0  # 1000 full 22x22 graphs well under the budget

    def test_pair_features_matches_full_graph(self):
        rng = np.random.default_rng(5)
        pa, pb = random_pose(rng, 5), random_pose(rng, 7)
        np.testing.assert_array_equal(
            pair_features(pa.positions, pb.positions), full_graph(pa, pb).features
        )


class TestReconstruction:
    def test_roundtrip_both_sides(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            pa, pb = random_pose(rng, 22), random_pose(rng, 22)
            g = full_graph(pa, pb)
            rb = reconstruct_partner(pa, g, "A")
            ra = reconstruct_partner(pb, g, "B")
            assert np.abs(rb.positions - pb.positions).max() <= 1e-12
            assert np.abs(ra.positions - pa.positions).max() <= 1e-12

    def test_single_edge_arithmetic(self):
        pa = Pose(np.array([[1.0, 1.0, 0.0]]))
        g = GraphFeature(
            i_idx=np.array([0]), j_idx=np.array([0]),
            features=np.array([[0.0, 0, 1, 1, 1, 0.5]]), m=1, n=1,
        )
        rb = reconstruct_partner(pa, g, "A")
        np.testing.assert_allclose(rb.positions[0], [1, 1, 1], atol=1e-15)

    def test_perturbed_mid_raises(self):
        rng = np.random.default_rng(7)
        pa, pb = random_pose(rng, 4), random_pose(rng, 4)
        g = full_graph(pa, pb)
        bad = g.features.copy()
        bad[3, 5] += 0.1
        g2 = GraphFeature(g.i_idx, g.j_idx, bad, g.m, g.n)
        with pytest.raises(GraphError, match="inconsistent"):
            reconstruct_partner(pa, g2, "A")

    def test_incomplete_graph_rejected(self):
        rng = np.random.default_rng(8)
        pa, pb = random_pose(rng, 4), random_pose(rng, 4)
        g = full_graph(pa, pb)
        partial = GraphFeature(g.i_idx[:5], g.j_idx[:5], g.features[:5], 4, 4)
        with pytest.raises(GraphError, match="full graph"):
            reconstruct_partner(pa, partial, "A")


class TestEdgeAccessors:
    def test_length(self):
        assert edge_length(np.array([3.0, 4, 0, 0, 0, 0])) == pytest.approx(5.0)

    def test_mid_height(self):
        assert edge_mid_height(np.array([0.0, 0, 0, 0, 0, 1.3])) == pytest.approx(1.3)

    def test_rel_xy(self):
        np.testing.assert_array_equal(edge_rel_xy(np.array([1.0, 2, 9, 0, 0, 0])), [1, 2])


class TestTraceIo:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        ids = rng.integers(0, 22, size=(5, 4, 2))
        feats = rng.normal(size=(5, 4, 6))
        trace = make_trace(ids, feats, fps=60.0, metadata={"source_demo": "x"})
        path = tmp_path / "trace.json"
        save_trace(trace, path, provenance={"seed": 0})
        again = load_trace(path)
        np.testing.assert_array_equal(again.edge_ids, ids)
        np.testing.assert_array_equal(again.features, feats)
        assert again.fps == 60.0
        assert again.n_bar == 4
        assert again.metadata["source_demo"] == "x"

    def test_bad_shapes_rejected(self):
        with pytest.raises(GraphError, match="edge ids"):
            make_trace(np.zeros((3, 4)), np.zeros((3, 4, 6)), 60.0)
