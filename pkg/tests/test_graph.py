import itertools

import numpy as np
import pytest

from compfeat.errors import DataError
from compfeat.graph import (
    WeightGraph,
    build_graph,
    content_hash,
    kkt_residual,
    knn,
    load_graph,
    optimality_gap,
    reconstruction_error,
    save_graph,
    solve_weights,
)
from compfeat.encoding import EncodedMatrix


def brute_force_knn(x, k):
    """Full-sort reference: same distances, selection by (distance, index)."""
    n = x.shape[0]
    out = []
    for i in range(n):
        d2 = ((x - x[i]) ** 2).sum(axis=1)
        order = sorted((j for j in range(n) if j != i), key=lambda j: (d2[j], j))
        out.append(order[: min(k, n - 1)])
    return np.asarray(out)


def simplex_grid(k, step):
    """All simplex points whose coordinates are multiples of step."""
    ticks = round(1.0 / step)
    for cuts in itertools.combinations_with_replacement(range(ticks + 1), k - 1):
        h = np.diff((0,) + cuts + (ticks,)) / ticks
        yield h


class TestKnn:
    def test_two_points(self):
        x = np.array([[0.0], [3.0]])
        np.testing.assert_array_equal(knn(x, 1), [[1], [0]])

    def test_collinear_points(self):
        x = np.array([[0.0], [1.0], [10.0]])
        np.testing.assert_array_equal(knn(x, 1), [[1], [0], [1]])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(100, 5))
        np.testing.assert_array_equal(knn(x, 20), brute_force_knn(x, 20))

    def test_tie_break_by_index(self):
        # three points equidistant from the origin row
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        np.testing.assert_array_equal(knn(x, 3)[0], [1, 2, 3])

    def test_k_clipped_to_n_minus_one(self):
        x = np.random.default_rng(1).normal(size=(4, 2))
        assert knn(x, 10).shape == (4, 3)


class TestSolveWeights:
    def test_coincident_neighbor_gets_all_weight(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 3))
        x[0] = x[3]  # row 0 coincides with a neighbor
        nb = knn(x, 4)
        g = solve_weights(x, nb)
        pos = list(nb[0]).index(3)
        assert g.weights[0, pos] == pytest.approx(1.0, abs=1e-8)

    def test_midpoint_gets_half_half(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, -1.0], [5.0, 7.0]])
        g = solve_weights(x, np.array([[1, 2], [0, 2], [0, 1], [0, 1]]))
        np.testing.assert_allclose(g.weights[0], [0.5, 0.5], atol=1e-10)

    def test_matches_grid_search(self):
        """Dense simplex grid (step 0.02) over 5 neighbors in 3-D."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 3))
        nb = np.array([[j for j in range(6) if j != i][:5] for i in range(6)])
        g = solve_weights(EncodedMatrix(values=x, blocks={}), nb)
        a = x[nb[0]]
        best = min(((x[0] - h @ a) ** 2).sum() for h in simplex_grid(5, 0.02))
        solver = ((x[0] - g.weights[0] @ a) ** 2).sum()
        assert solver <= best + 1e-12
        assert abs(solver - best) <= 1e-3

    def test_duplicate_rows_give_uniform(self):
        x = np.ones((5, 3))
        g = build_graph(EncodedMatrix(values=x, blocks={}), 3)
        np.testing.assert_allclose(g.weights, 1.0 / 3.0)

    def test_certificates(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(80, 4))
        g = build_graph(EncodedMatrix(values=x, blocks={}), 10)
        assert kkt_residual(x, g).max() <= 1e-6
        assert optimality_gap(x, g).max() <= 1e-8

    def test_never_worse_than_uniform(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(60, 3))
        nb = knn(x, 8)
        g = solve_weights(x, nb)
        uniform = WeightGraph(neighbors=nb, weights=np.full(nb.shape, 1.0 / 8))
        assert (
            reconstruction_error(x, g) <= reconstruction_error(x, uniform) + 1e-12
        ).all()

    def test_row_sums(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(500, 6))
        g = build_graph(EncodedMatrix(values=x, blocks={}), 12)
        assert np.abs(g.weights.sum(axis=1) - 1.0).max() <= 1e-10
        assert g.weights.min() >= 0.0

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(40, 3))
        perm = rng.permutation(40)
        g = build_graph(EncodedMatrix(values=x, blocks={}), 5)
        gp = build_graph(EncodedMatrix(values=x[perm], blocks={}), 5)
        # row r of the permuted graph describes original instance perm[r],
        # and its neighbor index q points at original instance perm[q]
        np.testing.assert_array_equal(perm[gp.neighbors], g.neighbors[perm])
        np.testing.assert_allclose(gp.weights, g.weights[perm], atol=1e-12)

    def test_determinism(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(50, 4))
        enc = EncodedMatrix(values=x, blocks={})
        a = build_graph(enc, 6)
        b = build_graph(enc, 6)
        np.testing.assert_array_equal(a.neighbors, b.neighbors)
        np.testing.assert_array_equal(a.weights, b.weights)


class TestWeightGraphType:
    def test_rejects_self_loops(self):
        with pytest.raises(DataError, match="self"):
            WeightGraph(neighbors=np.array([[0], [0]]), weights=np.array([[1.0], [1.0]]))

    def test_rejects_bad_row_sum(self):
        with pytest.raises(DataError, match="sum to 1"):
            WeightGraph(neighbors=np.array([[1], [0]]), weights=np.array([[0.5], [1.0]]))

    def test_dense_round_trip(self):
        rng = np.random.default_rng(9)
        h = rng.gamma(1.0, size=(6, 6))
        np.fill_diagonal(h, 0.0)
        h /= h.sum(axis=1, keepdims=True)
        g = WeightGraph.from_dense(h)
        np.testing.assert_allclose(g.to_dense(), h, atol=1e-12)

    def test_immutable(self):
        g = WeightGraph(neighbors=np.array([[1], [0]]), weights=np.array([[1.0], [1.0]]))
        with pytest.raises(ValueError):
            g.weights[0, 0] = 0.5


class TestGraphCache:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(20, 3))
        enc = EncodedMatrix(values=x, blocks={"x": (0, 3)})
        g = build_graph(enc, 4)
        path = tmp_path / "g.bin"
        save_graph(g, path, content_key=content_hash(enc))
        loaded = load_graph(path, expected_hash=content_hash(enc))
        np.testing.assert_array_equal(loaded.neighbors, g.neighbors)
        np.testing.assert_array_equal(loaded.weights, g.weights)

    def test_hash_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(11)
        enc = EncodedMatrix(values=rng.normal(size=(10, 2)), blocks={})
        g = build_graph(enc, 3)
        path = tmp_path / "g.bin"
        save_graph(g, path, content_key=content_hash(enc))
        with pytest.raises(DataError, match="mismatch"):
            load_graph(path, expected_hash="0" * 64)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataError, match="not a weight-graph"):
            load_graph(path)

    def test_build_graph_uses_cache(self, tmp_path):
        rng = np.random.default_rng(12)
        enc = EncodedMatrix(values=rng.normal(size=(30, 3)), blocks={})
        a = build_graph(enc, 5, cache_dir=str(tmp_path))
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        b = build_graph(enc, 5, cache_dir=str(tmp_path))
        np.testing.assert_array_equal(a.weights, b.weights)
