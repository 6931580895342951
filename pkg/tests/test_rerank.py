import math

import numpy as np
import pytest

from localreid.data import BadMagic
from localreid.knn import NeighborList, topk_neighbors
from localreid.rerank import (
    FrrParams,
    SparseRefinedDistances,
    full_rerank,
    inclusion_exclusion,
    iou_affinity,
    local_distances,
    local_rerank,
    refine_distances,
)

from oracles import frr_reference, naive_refine


def make_nn(indices, distances=None):
    """Hand-built NeighborList; rows may break the kNN invariants on purpose
    (extreme-case fixtures need identical or self-inclusive rows)."""
    indices = np.asarray(indices, dtype=np.int64)
    if distances is None:
        distances = np.zeros(indices.shape)
    return NeighborList(indices, np.asarray(distances, dtype=np.float64))


class TestLocalDistances:
    def test_analytic_points(self):
        nn = make_nn([[1, 2], [0, 2], [0, 1]], [[0.0, math.log(2)], [0.5, 1.0], [0.0, 0.0]])
        dl = local_distances(nn)
        assert dl[0, 0] == 1.0
        assert dl[0, 1] == pytest.approx(0.5)

    def test_matches_scalar_exp(self):
        rng = np.random.default_rng(1)
        F = rng.standard_normal((30, 4)).astype(np.float32)
        nn = topk_neighbors(F, 6)
        dl = local_distances(nn)
        for i in range(30):
            for t in range(6):
                assert dl[i, t] == pytest.approx(math.exp(-nn.distances[i, t]), abs=1e-7)
        assert (dl > 0).all() and (dl <= 1).all()
        assert (np.diff(dl, axis=1) <= 0).all()


class TestInclusionExclusion:
    def test_identical_neighborhoods(self):
        # rows 0 and 1 share the identical list {0,1,2}
        nn = make_nn([[0, 1, 2], [0, 1, 2], [0, 1, 2], [0, 1, 2]])
        shared, only_i, only_j = inclusion_exclusion(0, 1, nn)
        assert set(shared) == {0, 1, 2}
        assert only_i.size == 0 and only_j.size == 0

    def test_disjoint_neighborhoods(self):
        nn = make_nn([[1, 2, 3], [4, 5, 6]] + [[0, 1, 2]] * 5)
        shared, only_i, only_j = inclusion_exclusion(0, 1, nn)
        assert shared.size == 0
        assert set(only_i) == {1, 2, 3}
        assert set(only_j) == {4, 5, 6}

    def test_matches_set_oracle(self):
        rng = np.random.default_rng(2)
        n, k = 40, 20
        idx = np.stack([rng.choice(n, size=k, replace=False) for _ in range(n)])
        nn = make_nn(idx)
        for i in range(0, n, 5):
            j = int(idx[i, 0])
            shared, only_i, only_j = inclusion_exclusion(i, j, nn)
            si, sj = set(map(int, idx[i])), set(map(int, idx[j]))
            assert set(map(int, shared)) == si & sj
            assert set(map(int, only_i)) == si - (si & sj)
            assert set(map(int, only_j)) == sj - (si & sj)
            assert shared.size + only_i.size == k
            assert shared.size + only_j.size == k

    def test_requires_stored_pair(self):
        nn = make_nn([[1, 2], [0, 2], [0, 1]])
        with pytest.raises(ValueError, match="not a neighbor"):
            inclusion_exclusion(0, 0, nn)


class TestIouAffinity:
    def test_identical_lists_equal_rows(self):
        nn = make_nn([[0, 1, 2]] * 3, [[0.1, 0.4, 0.9]] * 3)
        dl = local_distances(nn)
        assert iou_affinity(0, 1, dl, nn) == 1.0

    def test_disjoint_lists(self):
        nn = make_nn([[1, 2, 3], [0, 4, 5]] + [[0, 1, 2]] * 4, np.full((6, 3), 0.5))
        dl = local_distances(nn)
        assert iou_affinity(0, 1, dl, nn) == 0.0

    def test_four_point_hand_instance(self):
        # N(0)={1,2}, N(1)={0,2}; shared={2}, exclusions {1} and {0}
        nn = make_nn(
            [[1, 2], [0, 2], [0, 1], [0, 1]],
            [[0.2, 0.7], [0.3, 0.5], [0.1, 0.1], [0.1, 0.1]],
        )
        dl = local_distances(nn)
        w = lambda d: math.exp(-d)
        s_min = min(w(0.7), w(0.5))
        s_max = max(w(0.7), w(0.5))
        want = s_min / (s_max + w(0.2) + w(0.3))
        assert iou_affinity(0, 1, dl, nn) == pytest.approx(want, abs=1e-12)

    def test_zero_denominator_guard(self):
        nn = make_nn([[1, 2], [0, 2], [0, 1]], np.full((3, 2), np.inf))
        dl = local_distances(nn)  # all-zero weights
        assert iou_affinity(0, 1, dl, nn) == 0.0


class TestRefineDistances:
    def test_identical_lists_give_zero(self):
        nn = make_nn([[0, 1, 2]] * 4, [[0.1, 0.4, 0.9]] * 4)
        R = refine_distances(nn)
        # rows 0,1,2 all reciprocal with identical lists and weights
        assert R.lookup(0, 1) == 0.0
        assert R.lookup(1, 2) == 0.0

    def test_non_reciprocal_is_one(self):
        # 1 is a neighbor of 0, but 0 is not a neighbor of 1
        nn = make_nn([[1, 2], [2, 3], [0, 1], [1, 2]], np.full((4, 2), 0.3))
        R = refine_distances(nn)
        assert R.lookup(0, 1) == 1.0

    def test_duplicate_points_closest_refined(self):
        rng = np.random.default_rng(3)
        F = rng.standard_normal((30, 6))
        F /= np.linalg.norm(F, axis=1, keepdims=True)
        F = F.astype(np.float32)
        F[17] = F[4]  # exact duplicates
        R = local_rerank(F, 8)
        row = np.flatnonzero(R.indices[4] == 17)[0]
        dup_value = R.values[4, row]
        others = np.delete(R.values[4], row)
        assert (dup_value < others).all()

    @pytest.mark.parametrize("n,k,seed", [(60, 5, 0), (200, 20, 1), (120, 11, 2)])
    def test_matches_naive_oracle(self, n, k, seed):
        rng = np.random.default_rng(seed)
        F = rng.standard_normal((n, 16)).astype(np.float32)
        nn = topk_neighbors(F, k)
        R = refine_distances(nn)
        want = naive_refine(nn.indices, nn.distances)
        np.testing.assert_allclose(R.values, want, atol=1e-6)

    def test_bounded_and_reciprocal_symmetry(self):
        rng = np.random.default_rng(4)
        F = rng.standard_normal((80, 8)).astype(np.float32)
        nn = topk_neighbors(F, 10)
        R = refine_distances(nn)
        assert (R.values >= 0).all() and (R.values <= 1).all()
        neighbor_sets = [set(map(int, nn.indices[i])) for i in range(80)]
        checked = 0
        for i in range(80):
            for j in map(int, nn.indices[i]):
                if i in neighbor_sets[j]:
                    assert R.lookup(i, j) == R.lookup(j, i)
                    checked += 1
        assert checked > 100

    def test_storage_is_exactly_n_by_k(self):
        rng = np.random.default_rng(5)
        F = rng.standard_normal((50, 4)).astype(np.float32)
        R = local_rerank(F, 7)
        assert R.indices.shape == (50, 7)
        assert R.values.shape == (50, 7)
        assert R.indices.size == 50 * 7

    @pytest.mark.parametrize("scale", [0.5, 3.0])
    def test_distance_scaling_preserves_structure(self, scale):
        # value rankings are NOT generally preserved under a global distance
        # rescale (the exponential weights reshuffle ratio magnitudes), but
        # the stored/reciprocal structure and extreme values must be: neighbor
        # sets are scale-invariant, so exact-1 entries and exact-0 entries
        # stay put.
        rng = np.random.default_rng(6)
        F = rng.standard_normal((70, 8)).astype(np.float32)
        nn = topk_neighbors(F, 9)
        base = refine_distances(nn).values
        scaled = refine_distances(NeighborList(nn.indices, nn.distances * scale)).values
        np.testing.assert_array_equal(base == 1.0, scaled == 1.0)
        np.testing.assert_array_equal(base == 0.0, scaled == 0.0)
        # extremes from constructed instances survive scaling too
        ident = make_nn([[0, 1, 2]] * 4, [[0.1, 0.4, 0.9]] * 4)
        ident_scaled = NeighborList(ident.indices, ident.distances * scale)
        assert refine_distances(ident_scaled).lookup(0, 1) == 0.0


class TestSparseRefinedDistances:
    def test_lookup_absent_is_one(self):
        R = SparseRefinedDistances(
            np.array([[1], [0], [0]]), np.array([[0.25], [0.25], [0.5]], dtype=np.float32)
        )
        assert R.lookup(0, 2) == 1.0
        assert R.lookup(0, 1) == pytest.approx(0.25)

    def test_to_dense_fills_ones(self):
        R = SparseRefinedDistances(
            np.array([[1], [0], [1]]), np.array([[0.25], [0.25], [0.5]], dtype=np.float32)
        )
        D = R.to_dense()
        assert D.shape == (3, 3)
        assert D[0, 1] == pytest.approx(0.25)
        assert D[0, 2] == 1.0 and D[2, 2] == 1.0

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        F = rng.standard_normal((40, 4)).astype(np.float32)
        R = local_rerank(F, 6)
        path = tmp_path / "r.srdm"
        R.save(path)
        back = SparseRefinedDistances.load(path)
        np.testing.assert_array_equal(back.indices, R.indices)
        np.testing.assert_array_equal(back.values, R.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "r.srdm"
        path.write_bytes(b"NOPE" + b"\0" * 32)
        with pytest.raises(BadMagic):
            SparseRefinedDistances.load(path)

    def test_validate_range(self):
        R = SparseRefinedDistances(np.array([[1], [0]]), np.array([[1.5], [0.0]], dtype=np.float32))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            R.validate()


class TestFullRerank:
    def test_lambda_one_returns_normalized_original(self):
        rng = np.random.default_rng(8)
        F = rng.standard_normal((40, 6)).astype(np.float32)
        out = full_rerank(F, FrrParams(10, 3, 1.0))
        D0 = ((F[:, None, :] - F[None, :, :]) ** 2).sum(axis=2)
        colmax = D0.max(axis=0)
        want = (D0 / colmax).T
        np.testing.assert_allclose(out, want, atol=1e-5)

    def test_identical_points_lambda_zero(self):
        rng = np.random.default_rng(9)
        F = rng.standard_normal((25, 5)).astype(np.float32)
        F[11] = F[3]
        out = full_rerank(F, FrrParams(6, 2, 0.0))
        row = out[3].copy()
        row[3] = np.inf  # ignore self
        assert out[3, 11] == row.min()

    @pytest.mark.parametrize("seed,metric", [(10, "euclidean"), (11, "cosine")])
    def test_matches_clean_room_reference(self, seed, metric):
        rng = np.random.default_rng(seed)
        F = rng.standard_normal((100, 8)).astype(np.float32)
        out = full_rerank(F, FrrParams(12, 4, 0.3), metric)
        want = frr_reference(F, 12, 4, 0.3, metric)
        np.testing.assert_allclose(out, want, atol=1e-5)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            FrrParams(10, 11, 0.3)
        with pytest.raises(ValueError):
            FrrParams(10, 3, 1.5)
        with pytest.raises(ValueError):
            full_rerank(np.ones((5, 2), dtype=np.float32), FrrParams(10, 3, 0.3))
