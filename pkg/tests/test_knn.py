import math

import numpy as np
import pytest

from localreid.data import BadMagic
from localreid.knn import NeighborList, pairwise_distances, topk_neighbors

from oracles import brute_knn


class TestTopkNeighbors:
    def test_unit_basis_ties_break_by_index(self):
        F = np.eye(3, dtype=np.float32)
        nn = topk_neighbors(F, 2, "euclidean")
        np.testing.assert_array_equal(nn.indices, [[1, 2], [0, 2], [0, 1]])
        np.testing.assert_allclose(nn.distances, math.sqrt(2))

    def test_collinear_points(self):
        F = np.array([[0.0], [1.0], [3.0]], dtype=np.float32)
        nn = topk_neighbors(F, 1, "euclidean")
        np.testing.assert_array_equal(nn.indices[:, 0], [1, 0, 1])

    @pytest.mark.parametrize("metric", ["euclidean", "cosine"])
    def test_matches_brute_force_oracle(self, metric):
        rng = np.random.default_rng(7)
        F = rng.standard_normal((50, 8)).astype(np.float32)
        nn = topk_neighbors(F, 10, metric)
        idx, dist = brute_knn(F, 10, metric)
        np.testing.assert_array_equal(nn.indices, idx)
        np.testing.assert_allclose(nn.distances, dist, atol=1e-9)

    def test_distances_nondecreasing_and_smallest(self):
        rng = np.random.default_rng(11)
        F = rng.standard_normal((40, 4)).astype(np.float32)
        nn = topk_neighbors(F, 12)
        assert (np.diff(nn.distances, axis=1) >= 0).all()
        D = pairwise_distances(F, F)
        for i in range(40):
            row = np.delete(D[i], i)
            np.testing.assert_allclose(nn.distances[i], np.sort(row)[:12], atol=1e-9)

    def test_block_size_does_not_change_output(self):
        rng = np.random.default_rng(13)
        F = rng.standard_normal((37, 5)).astype(np.float32)
        a = topk_neighbors(F, 6, block_size=7)
        b = topk_neighbors(F, 6, block_size=1024)
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.distances, b.distances)

    def test_k_out_of_range(self):
        F = np.ones((5, 2), dtype=np.float32)
        with pytest.raises(ValueError):
            topk_neighbors(F, 0)
        with pytest.raises(ValueError):
            topk_neighbors(F, 5)

    def test_zero_norm_row_under_cosine(self):
        F = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        with pytest.raises(ValueError, match="zero norm"):
            topk_neighbors(F, 1, "cosine")

    def test_validate_catches_self_reference(self):
        nn = NeighborList(np.array([[0], [0]]), np.zeros((2, 1)))
        with pytest.raises(ValueError, match="own index"):
            nn.validate()


class TestPairwiseDistances:
    def test_cosine_identities(self):
        u = np.array([[1.0, 0.0]], dtype=np.float32)
        v = np.array([[0.0, 1.0]], dtype=np.float32)
        assert pairwise_distances(u, u, "cosine")[0, 0] == 0.0
        assert pairwise_distances(u, v, "cosine")[0, 0] == pytest.approx(1.0)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((20, 4)).astype(np.float32)
        B = rng.standard_normal((30, 4)).astype(np.float32)
        for metric in ("euclidean", "cosine"):
            D = pairwise_distances(A, B, metric)
            for i in range(20):
                for j in range(30):
                    a, b = A[i].astype(np.float64), B[j].astype(np.float64)
                    if metric == "euclidean":
                        want = math.sqrt(((a - b) ** 2).sum())
                    else:
                        want = 1.0 - (a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
                    assert D[i, j] == pytest.approx(want, abs=1e-6)

    def test_self_table_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((25, 6)).astype(np.float32)
        D = pairwise_distances(A, A)
        assert (D == D.T).all()
        assert (np.diag(D) == 0).all()
        assert (D >= 0).all()

    def test_cosine_range(self):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((30, 3)).astype(np.float32)
        D = pairwise_distances(A, A, "cosine")
        assert D.min() >= 0 and D.max() <= 2

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            pairwise_distances(np.ones((2, 3), np.float32), np.ones((2, 4), np.float32))


class TestNeighborListIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        F = rng.standard_normal((30, 4)).astype(np.float32)
        nn = topk_neighbors(F, 5)
        path = tmp_path / "nn.nnlk"
        nn.save(path)
        back = NeighborList.load(path)
        np.testing.assert_array_equal(back.indices, nn.indices)
        # distances are stored as float32
        np.testing.assert_array_equal(back.distances, nn.distances.astype(np.float32))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "nn.nnlk"
        path.write_bytes(b"NOPE" + b"\0" * 32)
        with pytest.raises(BadMagic):
            NeighborList.load(path)
