import numpy as np
import pytest

from tensorbp.fabp import (
    ConvergenceError,
    FabpConfig,
    PropagationError,
    choose_homophily,
    classify,
    compute_coefficients,
    dense_solve,
    is_diagonally_dominant,
    load_beliefs,
    propagate,
    save_beliefs,
    system_matrix,
)
from tensorbp.graph import GraphConfig, KnnGraph, knn_graph


def random_graph(rng, n, k=None):
    k = k or int(rng.integers(1, min(n - 1, 12) + 1))
    return knn_graph(rng.normal(size=(n, int(rng.integers(1, 6)))), GraphConfig(k=k))


def random_labels(rng, n, frac=0.2):
    labels = np.zeros(n, dtype=int)
    idx = rng.choice(n, size=max(1, int(frac * n)), replace=False)
    labels[idx] = rng.choice([-1, 1], size=idx.size)
    return labels


def star(n_leaves):
    return KnnGraph.from_edges(n_leaves + 1, [(0, i) for i in range(1, n_leaves + 1)])


class TestCoefficients:
    def test_small_h_limit(self):
        a, c = compute_coefficients(1e-9)
        assert a < 1e-8 and c < 1e-8

    def test_h_point_one(self):
        a, c = compute_coefficients(0.1)
        assert a == pytest.approx(0.04 / 0.96, abs=1e-12)
        assert c == pytest.approx(0.2 / 0.96, abs=1e-12)
        assert round(a, 7) == 0.0416667 and round(c, 7) == 0.2083333

    def test_h_quarter(self):
        a, c = compute_coefficients(0.25)
        assert a == pytest.approx(1 / 3, abs=1e-12)
        assert c == pytest.approx(2 / 3, abs=1e-12)

    @pytest.mark.parametrize("h", [0.0, -0.1, 0.5, 0.7])
    def test_domain(self, h):
        with pytest.raises(PropagationError):
            compute_coefficients(h)


class TestChooseHomophily:
    def test_max_degree_four(self):
        h = choose_homophily(star(4))
        assert h == 0.1
        assert is_diagonally_dominant(system_matrix(star(4), h))

    def test_isolated_nodes(self):
        assert choose_homophily(KnnGraph.from_edges(3, [])) == 0.499

    def test_off_grid_bound(self):
        # d_max = 6 -> bound 1/14 = 0.0714..., grid value 0.071
        assert choose_homophily(star(6)) == 0.071

    def test_large_degree_returns_bound(self):
        h = choose_homophily(star(600))
        assert h == pytest.approx(1 / 1202)
        assert is_diagonally_dominant(system_matrix(star(600), h))

    def test_always_dominant(self, rng):
        for _ in range(50):
            g = random_graph(rng, int(rng.integers(3, 120)))
            h = choose_homophily(g)
            assert 0 < h < 0.5
            assert is_diagonally_dominant(system_matrix(g, h))


class TestPropagateExamples:
    def test_isolated_nodes(self):
        state = propagate(KnnGraph.from_edges(2, []), [1, 0], FabpConfig(prior_magnitude=0.5))
        np.testing.assert_allclose(state.beliefs, [0.5, 0.0], atol=1e-15)

    @pytest.mark.parametrize("h", [0.01, 0.1, 0.3, 0.45])
    def test_single_edge(self, h):
        state = propagate(KnnGraph.from_edges(2, [(0, 1)]), [1, 0], FabpConfig(homophily=h))
        a, c = compute_coefficients(h)
        # closed form of the 2x2 system
        det = (1 + a) ** 2 - c**2
        expected = 0.5 * np.array([(1 + a) / det, c / det])
        np.testing.assert_allclose(state.beliefs, expected, rtol=1e-10)
        assert 0 < state.beliefs[1] < state.beliefs[0]

    def test_barbell_antisymmetry(self):
        # two triangles {0,1,2} and {3,4,5} joined by 2-3; mirror maps i -> 5 - i
        edges = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]
        g = KnnGraph.from_edges(6, edges)
        b = propagate(g, [1, 0, 0, 0, 0, -1]).beliefs
        np.testing.assert_allclose(b, -b[::-1], atol=1e-14)
        assert np.all(b[:3] > 0) and np.all(b[3:] < 0)

    def test_priors(self):
        state = propagate(star(3), [0, 1, -1, 0], FabpConfig(prior_magnitude=2.0))
        np.testing.assert_array_equal(state.priors, [0, 2, -2, 0])
        assert state.residual <= 1e-12
        assert state.solver == "pcg"


def test_matches_dense_oracle(rng):
    for _ in range(40):
        n = int(rng.integers(3, 300))
        g = random_graph(rng, n)
        labels = random_labels(rng, n)
        cfg = FabpConfig(homophily=float(rng.uniform(0.001, choose_homophily(g))))
        state = propagate(g, labels, cfg)
        oracle = dense_solve(g, state.priors, state.homophily)
        np.testing.assert_allclose(state.beliefs, oracle, atol=1e-6)
        assert np.max(np.abs(state.beliefs - oracle)) <= 1e-10


def test_linearity(rng):
    for _ in range(20):
        n = int(rng.integers(5, 100))
        g = random_graph(rng, n)
        l1, l2 = random_labels(rng, n), random_labels(rng, n)
        cfg = FabpConfig(homophily=choose_homophily(g))
        b1 = propagate(g, l1, cfg).beliefs
        b2 = propagate(g, l2, cfg).beliefs
        both = dense_solve(g, 0.5 * (l1 + l2), cfg.homophily)
        np.testing.assert_allclose(b1 + b2, both, atol=1e-9)


def test_prior_scaling_and_negation(rng):
    for _ in range(20):
        n = int(rng.integers(5, 100))
        g = random_graph(rng, n)
        labels = random_labels(rng, n)
        base = propagate(g, labels).beliefs
        s = float(rng.uniform(0.01, 100))
        scaled = propagate(g, labels, FabpConfig(prior_magnitude=0.5 * s)).beliefs
        np.testing.assert_allclose(scaled, s * base, rtol=1e-9, atol=1e-14 * s)
        neg = propagate(g, -labels).beliefs
        np.testing.assert_allclose(neg, -base, atol=1e-14)
        nz = base != 0
        np.testing.assert_array_equal(classify(scaled)[0][nz], classify(base)[0][nz])
        np.testing.assert_array_equal(classify(neg)[0][nz], -classify(base)[0][nz])


class TestClassify:
    def test_sign_rule(self):
        preds, ties = classify(np.array([0.3, -0.1]))
        np.testing.assert_array_equal(preds, [1, -1])
        assert ties == 0

    def test_tie(self, caplog):
        preds, ties = classify(np.array([0.0, -2.0, 0.0]))
        np.testing.assert_array_equal(preds, [1, -1, 1])
        assert ties == 2
        assert "zero belief" in caplog.text

    def test_negation_flips(self, rng):
        b = rng.normal(size=50)
        np.testing.assert_array_equal(classify(-b)[0], -classify(b)[0])


class TestErrors:
    def test_all_zero_labels(self):
        with pytest.raises(PropagationError, match="no known"):
            propagate(star(2), [0, 0, 0])

    def test_length_mismatch(self):
        with pytest.raises(PropagationError):
            propagate(star(2), [1, 0])

    def test_bad_label_values(self):
        with pytest.raises(PropagationError):
            propagate(star(2), [2, 0, 0])

    @pytest.mark.parametrize("kwargs", [{"homophily": 0.5}, {"homophily": 0}, {"prior_magnitude": 0},
                                        {"solver_tol": 0}, {"max_solver_iters": 0}])
    def test_config(self, kwargs):
        with pytest.raises(PropagationError):
            FabpConfig(**kwargs)

    def test_non_convergence_reports_residual(self, rng):
        g = random_graph(rng, 700, k=5)
        with pytest.raises(ConvergenceError) as info:
            propagate(g, random_labels(rng, 700), FabpConfig(homophily=0.2, max_solver_iters=2))
        assert info.value.residual > 1e-12
        assert info.value.iterations == 2

    def test_small_graph_falls_back_to_dense(self, rng):
        g = random_graph(rng, 100, k=5)
        state = propagate(g, random_labels(rng, 100), FabpConfig(homophily=0.05, max_solver_iters=1))
        assert state.solver == "dense"
        assert state.residual <= 1e-12


def test_belief_file_roundtrip(tmp_path, rng):
    g = random_graph(rng, 20)
    state = propagate(g, random_labels(rng, 20))
    preds, _ = classify(state)
    path = tmp_path / "beliefs.txt"
    save_beliefs(state, preds, path, node_ids=[f"n{i}" for i in range(20)])
    ids, priors, beliefs, names = load_beliefs(path)
    assert ids[0] == "n0"
    np.testing.assert_array_equal(priors, state.priors)
    np.testing.assert_array_equal(beliefs, state.beliefs)
    assert names == ["real" if p == 1 else "fake" for p in preds]
