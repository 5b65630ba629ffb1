import warnings

import numpy as np
import pytest

from tensorbp.cpd import (
    CpConfig,
    DecompositionError,
    FactorMatrices,
    SingularGramWarning,
    _mttkrp_direct,
    _solve_gram,
    cp_als,
    load_factors,
    mttkrp,
    reconstruction_residual,
    save_factors,
)
from tensorbp.graph import GraphConfig, knn_graph
from tensorbp.tensor import SparseTensor

EINSUM = {1: "ijk,jr,kr->ir", 2: "ijk,ir,kr->jr", 3: "ijk,ir,jr->kr"}


def random_sparse(rng, shape, density=0.4):
    dense = rng.uniform(0.5, 3.0, size=shape) * (rng.random(shape) < density)
    i, j, k = np.nonzero(dense)
    return SparseTensor.from_coords(shape, i, j, k, dense[i, j, k]), dense


def random_factors(rng, shape, rank):
    return FactorMatrices(*(rng.normal(size=(d, rank)) for d in shape), rng.uniform(0.5, 2.0, rank))


def dense_mttkrp(dense, f, mode):
    others = [m for m in f.factors()]
    del others[mode - 1]
    return np.einsum(EINSUM[mode], dense, *others)


def test_mttkrp_matches_dense_einsum(rng):
    for _ in range(60):
        shape = tuple(rng.integers(1, 6, size=3))
        t, dense = random_sparse(rng, shape)
        f = random_factors(rng, shape, int(rng.integers(1, 5)))
        for mode in (1, 2, 3):
            expected = dense_mttkrp(dense, f, mode)
            np.testing.assert_allclose(mttkrp(t, f, mode), expected, atol=1e-10)
            np.testing.assert_allclose(_mttkrp_direct(t, f.factors(), mode - 1), expected, atol=1e-10)


def test_mttkrp_hand_example():
    # X[0,1,0] = 2, X[1,0,1] = 3
    t = SparseTensor.from_coords((2, 2, 2), [0, 1], [1, 0], [0, 1], [2.0, 3.0])
    A = np.array([[1.0], [2.0]])
    B = np.array([[3.0], [4.0]])
    C = np.array([[5.0], [6.0]])
    f = FactorMatrices(A, B, C, np.ones(1))
    np.testing.assert_array_equal(mttkrp(t, f, 1), [[2 * 4 * 5], [3 * 3 * 6]])
    np.testing.assert_array_equal(mttkrp(t, f, 2), [[3 * 2 * 6], [2 * 1 * 5]])
    np.testing.assert_array_equal(mttkrp(t, f, 3), [[2 * 1 * 4], [3 * 2 * 3]])


def test_mttkrp_zero_tensor_gives_zeros(rng):
    t = SparseTensor.from_coords((3, 4, 2), [], [], [], [])
    f = random_factors(rng, (3, 4, 2), 3)
    for mode in (1, 2, 3):
        assert not np.any(mttkrp(t, f, mode))


def test_mttkrp_bad_mode(rng):
    t, _ = random_sparse(rng, (2, 2, 2), density=1.0)
    with pytest.raises(DecompositionError):
        mttkrp(t, random_factors(rng, (2, 2, 2), 1), 0)


def test_residual_matches_dense(rng):
    for _ in range(50):
        shape = tuple(rng.integers(1, 6, size=3))
        t, dense = random_sparse(rng, shape)
        f = random_factors(rng, shape, int(rng.integers(1, 4)))
        expected = np.linalg.norm(dense - f.to_dense())
        assert reconstruction_residual(t, f) == pytest.approx(expected, abs=1e-9 * max(1, expected))


def test_residual_of_exact_factors(rng):
    for _ in range(20):
        shape = tuple(rng.integers(2, 6, size=3))
        f = FactorMatrices(*(rng.uniform(0.1, 1, size=(d, 2)) for d in shape), np.array([2.0, 0.5]))
        dense = f.to_dense()
        t = SparseTensor.from_coords(shape, *np.nonzero(dense), dense[np.nonzero(dense)])
        assert reconstruction_residual(t, f) <= 1e-8 * np.linalg.norm(dense)


def test_residual_of_zero_factors_is_norm(rng):
    t, dense = random_sparse(rng, (4, 3, 5))
    zeros = FactorMatrices(np.zeros((4, 2)), np.zeros((3, 2)), np.zeros((5, 2)), np.ones(2))
    assert reconstruction_residual(t, zeros) == pytest.approx(np.linalg.norm(dense), rel=1e-12)


def test_planted_rank_one_recovery():
    rng = np.random.default_rng(3)
    a, b, c = (rng.uniform(0.1, 1.0, n) for n in (8, 7, 6))
    a, b, c = (v / np.linalg.norm(v) for v in (a, b, c))
    dense = 4.0 * np.einsum("i,j,k->ijk", a, b, c)
    t = SparseTensor.from_coords(dense.shape, *np.nonzero(dense), dense[np.nonzero(dense)])
    f, history = cp_als(t, CpConfig(rank=1, max_iters=200, tol=1e-12, seed=0))
    assert f.weights[0] == pytest.approx(4.0, abs=1e-6)
    for got, want in zip(f.factors(), (a, b, c)):
        assert abs(got[:, 0] @ want) >= 0.999
    assert history[-1] <= 1e-6


def test_history_monotone_and_first_sweep_improves(rng):
    for seed in range(15):
        shape = tuple(rng.integers(3, 9, size=3))
        t, _ = random_sparse(rng, shape, density=0.3)
        if t.nnz == 0:
            continue
        _, history = cp_als(t, CpConfig(rank=int(rng.integers(1, 4)), max_iters=40, tol=1e-10, seed=seed))
        assert history[1] <= history[0] + 1e-9
        assert all(b <= a + 1e-9 * history[0] for a, b in zip(history, history[1:]))


def test_history_matches_explicit_residual(rng):
    t, _ = random_sparse(rng, (5, 6, 4))
    f, history = cp_als(t, CpConfig(rank=2, max_iters=5, tol=1e-14, seed=1))
    assert history[-1] == pytest.approx(reconstruction_residual(t, f), abs=1e-9)


def test_unit_norm_columns(small_corpus, small_vocab):
    from tensorbp.tensor import TensorConfig, build_cooccurrence_tensor

    t = build_cooccurrence_tensor(small_corpus, small_vocab, TensorConfig(5, "binary"))
    f, _ = cp_als(t, CpConfig(rank=5, max_iters=10))
    for m in f.factors():
        np.testing.assert_allclose(np.linalg.norm(m, axis=0), 1.0, atol=1e-12)
    assert f.C.shape == (len(small_corpus), 5)


def test_empty_tensor_rejected():
    t = SparseTensor.from_coords((2, 2, 2), [], [], [], [])
    with pytest.raises(DecompositionError, match="empty"):
        cp_als(t)


@pytest.mark.parametrize("kwargs", [{"rank": 0}, {"rank": 51}, {"tol": 0.0}, {"max_iters": 0}])
def test_config_validation(kwargs):
    with pytest.raises(DecompositionError):
        CpConfig(**kwargs)


def test_deterministic(rng):
    t, _ = random_sparse(rng, (6, 6, 5))
    f1, h1 = cp_als(t, CpConfig(rank=3, seed=7))
    f2, h2 = cp_als(t, CpConfig(rank=3, seed=7))
    assert h1 == h2
    for a, b in zip(f1.factors(), f2.factors()):
        np.testing.assert_array_equal(a, b)


def test_scale_invariance_of_embedding_and_graph():
    rng = np.random.default_rng(11)
    t, _ = random_sparse(rng, (10, 10, 30), density=0.3)
    f1, _ = cp_als(t, CpConfig(rank=3, seed=2, tol=1e-9))
    f2, _ = cp_als(t.scaled(2.0), CpConfig(rank=3, seed=2, tol=1e-9))
    np.testing.assert_allclose(f2.weights, 2.0 * f1.weights, rtol=1e-8)
    np.testing.assert_allclose(f2.C, f1.C, atol=1e-8)
    g1 = knn_graph(f1.C, GraphConfig(k=4))
    g2 = knn_graph(f2.C, GraphConfig(k=4))
    np.testing.assert_array_equal(g1.edges(), g2.edges())


def test_ridge_warning_on_singular_gram():
    gram = np.ones((2, 2))
    with pytest.warns(SingularGramWarning):
        out = _solve_gram(np.ones((3, 2)), gram)
    assert np.all(np.isfinite(out))


def test_rank_exceeding_dims_still_runs():
    t = SparseTensor.from_coords((2, 2, 2), [0, 1], [1, 0], [0, 1], [1.0, 1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularGramWarning)
        f, history = cp_als(t, CpConfig(rank=4, max_iters=20))
    assert np.all(np.isfinite(f.C))
    assert history[-1] <= history[0] + 1e-9


def test_factor_roundtrip(tmp_path, rng):
    f = random_factors(rng, (4, 3, 5), 2)
    save_factors(f, tmp_path, manifest={"rank": 2})
    back = load_factors(tmp_path)
    for a, b in zip(back.factors() + [back.weights], f.factors() + [f.weights]):
        np.testing.assert_array_equal(a, b)
    assert (tmp_path / "cp_manifest.json").exists()
