import numpy as np
import pytest

from thepose.errors import Error
from thepose.geometry import RigidTransform, apply_se3, random_rotation
from thepose.graph import build_receptive_field, hybrid_distance, pairwise_euclidean


def knn_oracle(features, cloud, k, alpha):
    """Exhaustive O(N^2) reference: direct norms, full sort, index ties."""
    n = len(cloud)
    out = []
    for i in range(n):
        cand = []
        for j in range(n):
            if j == i:
                continue
            d = alpha * np.linalg.norm(features[i] - features[j]) + \
                (1 - alpha) * np.linalg.norm(cloud[i] - cloud[j])
            cand.append((d, j))
        cand.sort()
        out.append([j for _, j in cand[:k]])
    return out


class TestHybridDistance:
    def test_alpha_zero_is_point_distance(self):
        rng = np.random.default_rng(0)
        f1, f2 = rng.standard_normal((2, 8))
        p1, p2 = rng.standard_normal((2, 3))
        assert hybrid_distance(f1, f2, p1, p2, 0.0) == np.linalg.norm(p1 - p2)

    def test_alpha_one_is_feature_distance(self):
        rng = np.random.default_rng(1)
        f1, f2 = rng.standard_normal((2, 8))
        p1, p2 = rng.standard_normal((2, 3))
        assert hybrid_distance(f1, f2, p1, p2, 1.0) == np.linalg.norm(f1 - f2)

    def test_hand_computed_blend(self):
        # alpha=0.8, feature distance 1, point distance 2 -> 1.2
        f1 = np.zeros(4)
        f2 = np.array([1.0, 0.0, 0.0, 0.0])
        p1 = np.zeros(3)
        p2 = np.array([2.0, 0.0, 0.0])
        assert abs(hybrid_distance(f1, f2, p1, p2, 0.8) - 1.2) < 1e-15

    def test_identical_args_give_zero(self):
        f = np.array([0.3, -0.2])
        p = np.array([1.0, 2.0, 3.0])
        for alpha in (0.0, 0.25, 0.5, 1.0):
            assert hybrid_distance(f, f, p, p, alpha) == 0.0

    def test_affine_in_alpha(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            f1, f2 = rng.standard_normal((2, 6))
            p1, p2 = rng.standard_normal((2, 3))
            d0 = hybrid_distance(f1, f2, p1, p2, 0.0)
            d1 = hybrid_distance(f1, f2, p1, p2, 1.0)
            for a in (0.0, 0.25, 0.5, 0.75, 1.0):
                expect = a * d1 + (1 - a) * d0
                assert abs(hybrid_distance(f1, f2, p1, p2, a) - expect) < 1e-12


class TestBuildReceptiveField:
    def test_collinear_points(self):
        cloud = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [10, 0, 0],
                          [11, 0, 0]])
        feats = np.zeros((5, 2))
        g = build_receptive_field(feats, cloud, k=2, alpha=0.0)
        assert set(g.neighbors[0]) == {1, 2}
        assert set(g.neighbors[3]) == {4, 2}

    def test_alpha_one_with_coordinate_features_matches_alpha_zero(self):
        rng = np.random.default_rng(3)
        cloud = rng.standard_normal((40, 3))
        g0 = build_receptive_field(cloud, cloud, k=5, alpha=0.0)
        g1 = build_receptive_field(cloud, cloud, k=5, alpha=1.0)
        np.testing.assert_array_equal(np.sort(g0.neighbors, 1),
                                      np.sort(g1.neighbors, 1))

    @pytest.mark.parametrize("alpha", [0.0, 0.2, 0.8, 1.0])
    def test_matches_exhaustive_oracle(self, alpha):
        rng = np.random.default_rng(4)
        cloud = rng.standard_normal((200, 3))
        feats = rng.standard_normal((200, 16))
        g = build_receptive_field(feats, cloud, k=15, alpha=alpha)
        oracle = knn_oracle(feats, cloud, 15, alpha)
        for i in range(200):
            assert set(g.neighbors[i].tolist()) == set(oracle[i]), i

    def test_exact_ties_break_by_lower_index(self):
        # four identical points: neighbors must be the lowest indices
        cloud = np.zeros((6, 3))
        cloud[4] = [5.0, 0, 0]
        cloud[5] = [6.0, 0, 0]
        feats = np.zeros((6, 2))
        g = build_receptive_field(feats, cloud, k=2, alpha=0.0)
        assert g.neighbors[0].tolist() == [1, 2]
        assert g.neighbors[1].tolist() == [0, 2]
        assert g.neighbors[3].tolist() == [0, 1]

    def test_all_identical_features_alpha_one(self):
        feats = np.ones((8, 4))
        cloud = np.random.default_rng(5).standard_normal((8, 3))
        g = build_receptive_field(feats, cloud, k=3, alpha=1.0)
        for i in range(8):
            expect = [j for j in range(8) if j != i][:3]
            assert g.neighbors[i].tolist() == expect

    def test_k_too_large_rejected(self):
        cloud = np.zeros((4, 3))
        with pytest.raises(Error) as e:
            build_receptive_field(np.zeros((4, 2)), cloud, k=4, alpha=0.0)
        assert e.value.kind == "invalid-k"

    def test_se3_invariance_at_alpha_zero(self):
        rng = np.random.default_rng(6)
        cloud = rng.standard_normal((100, 3)) * 0.2
        feats = rng.standard_normal((100, 8))
        g = build_receptive_field(feats, cloud, k=10, alpha=0.0)
        T = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        g2 = build_receptive_field(feats, apply_se3(T, cloud), k=10, alpha=0.0)
        np.testing.assert_array_equal(g.neighbors, g2.neighbors)

    def test_se3_invariance_with_invariant_features_any_alpha(self):
        rng = np.random.default_rng(7)
        cloud = rng.standard_normal((100, 3)) * 0.2
        feats = rng.standard_normal((100, 8))  # pose-independent features
        for alpha in (0.2, 0.8):
            g = build_receptive_field(feats, cloud, k=10, alpha=alpha)
            T = RigidTransform(random_rotation(rng), rng.standard_normal(3))
            g2 = build_receptive_field(feats, apply_se3(T, cloud), k=10,
                                       alpha=alpha)
            np.testing.assert_array_equal(g.neighbors, g2.neighbors)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        cloud = rng.standard_normal((60, 3))
        feats = rng.standard_normal((60, 6))
        g = build_receptive_field(feats, cloud, k=7, alpha=0.5)
        perm = rng.permutation(60)
        gp = build_receptive_field(feats[perm], cloud[perm], k=7, alpha=0.5)
        inv = np.empty(60, dtype=int)
        inv[perm] = np.arange(60)
        for new_i in range(60):
            old_i = perm[new_i]
            relabeled = sorted(inv[g.neighbors[old_i]].tolist())
            assert sorted(gp.neighbors[new_i].tolist()) == relabeled

    def test_neighbors_sorted_by_distance_then_index(self):
        rng = np.random.default_rng(9)
        cloud = rng.standard_normal((50, 3))
        g = build_receptive_field(np.zeros((50, 1)), cloud, k=6, alpha=0.0)
        assert np.all(np.diff(g.distances, axis=1) >= 0)

    def test_pairwise_matches_direct_norms(self):
        rng = np.random.default_rng(10)
        m = rng.standard_normal((30, 5))
        d = pairwise_euclidean(m)
        for i in range(30):
            for j in range(30):
                assert abs(d[i, j] - np.linalg.norm(m[i] - m[j])) < 1e-9

    def test_json_dump_fields(self):
        import json

        cloud = np.random.default_rng(11).standard_normal((10, 3))
        g = build_receptive_field(np.zeros((10, 1)), cloud, k=3, alpha=0.0)
        blob = json.loads(g.to_json())
        assert blob["alpha"] == 0.0 and blob["k"] == 3
        assert len(blob["neighbors"]) == 10 and len(blob["distances"][0]) == 3
