"""Lewis weights and sampled lp regression."""
import numpy as np
import pytest

from levsamp import lpreg, oracle
from levsamp.operators import DenseOperator, ToeplitzOperator


def test_lewis_p2_equals_leverage():
    C = np.random.default_rng(0).standard_normal((60, 5))
    state = lpreg.lewis_weights_fixed_point(C, 2.0)
    np.testing.assert_allclose(state.weights, oracle.exact_leverage(C), atol=1e-6)
    assert state.converged
    # At p = 2 the reweighting exponent vanishes: one productive iteration.
    assert state.iterations <= 2


def test_lewis_weights_sum_to_d_and_match_oracle():
    C = np.random.default_rng(0).standard_normal((60, 5))
    for p in (1.0, 1.5, 3.0):
        state = lpreg.lewis_weights_fixed_point(C, p)
        assert state.converged
        assert state.weights.sum() == pytest.approx(5.0, abs=1e-3)
        np.testing.assert_allclose(state.weights, oracle.exact_lewis(C, p), atol=1e-4)


def test_lewis_duplicated_rows_halve():
    C = np.random.default_rng(0).standard_normal((60, 5))
    for p in (1.0, 3.0):
        w = lpreg.lewis_weights_fixed_point(C, p).weights
        w2 = lpreg.lewis_weights_fixed_point(np.vstack([C, C]), p).weights
        np.testing.assert_allclose(w2, np.concatenate([w, w]) / 2.0, atol=1e-4)


def test_lewis_zero_matrix_and_validation():
    state = lpreg.lewis_weights_fixed_point(np.zeros((5, 3)), 1.5)
    assert state.flags == ("zero-matrix",)
    assert not state.weights.any()
    for bad_p in (0.5, 4.0, 5.0):
        with pytest.raises(ValueError, match="p must"):
            lpreg.lewis_weights_fixed_point(np.ones((4, 2)), bad_p)


def test_lewis_rank_deficient_flag():
    C = np.random.default_rng(1).standard_normal((30, 4))
    C[:, 3] = C[:, 0] + C[:, 1]
    state = lpreg.lewis_weights_fixed_point(C, 2.0)
    assert "rank-deficient" in state.flags


def test_lewis_sample_probabilities_track_leverage_at_p2():
    n, d = 400, 4
    g = np.random.default_rng(3).standard_normal(n + d - 1)
    T = ToeplitzOperator(n, d, g)
    _, _, pi, _ = lpreg.lewis_sample(T, 2.0, 100, np.random.default_rng(7))
    tau = oracle.exact_leverage(oracle.toeplitz_dense(g, n, d))
    ratio = pi / (tau / tau.sum())
    assert ratio.min() > 0.25
    assert ratio.max() < 4.0


def test_lewis_sample_preserves_lp_norms_in_expectation():
    # Rescaling by (r * pi_j)^(-1/p) makes ||S C x||_p^p unbiased.
    n, d, p = 400, 4, 1.5
    g = np.random.default_rng(3).standard_normal(n + d - 1)
    T = ToeplitzOperator(n, d, g)
    dense = oracle.toeplitz_dense(g, n, d)
    x = np.random.default_rng(1).standard_normal(d)
    true = np.sum(np.abs(dense @ x) ** p)
    mc = np.random.default_rng(11)
    est = []
    for _ in range(150):
        idx, scales, _, _ = lpreg.lewis_sample(T, p, 200, mc)
        est.append(np.sum(np.abs((dense[idx] * scales[:, None]) @ x) ** p))
    assert np.mean(est) == pytest.approx(true, rel=0.15)


def test_solve_lp_p1_is_outlier_robust():
    # Constant design with 20/300 gross outliers: the l1 fit sits at the
    # median (0), far from the mean (6.67) an l2 fit would return.
    n = 300
    b = np.zeros(n)
    b[:20] = 100.0
    sol = lpreg.solve_lp(DenseOperator(np.ones((n, 1))), b, 1.0, 0.5, np.random.default_rng(0))
    assert abs(sol.x[0]) < 0.1
    assert sol.cost <= 1.05 * 2000.0


def test_solve_lp_near_oracle_across_p():
    n, d, eps = 300, 4, 0.5
    for p in (1.0, 1.5, 3.0):
        for seed in range(3):
            rng = np.random.default_rng(200 + seed)
            g = rng.standard_normal(n + d - 1)
            T = ToeplitzOperator(n, d, g)
            b = T.apply(rng.standard_normal(d)) + 0.3 * rng.standard_normal(n)
            _, opt = oracle.exact_lp(oracle.toeplitz_dense(g, n, d), b, p)
            sol = lpreg.solve_lp(
                ToeplitzOperator(n, d, g), b, p, eps, np.random.default_rng(seed)
            )
            assert sol.cost <= (1.0 + eps) * opt
            assert sol.cost >= opt * (1.0 - 1e-9)
            assert sol.repetitions_used == 3


def test_solve_lp_p2_agrees_with_least_squares():
    n, d = 300, 4
    rng = np.random.default_rng(5)
    g = rng.standard_normal(n + d - 1)
    b = ToeplitzOperator(n, d, g).apply(rng.standard_normal(d)) + 0.5 * rng.standard_normal(n)
    dense = oracle.toeplitz_dense(g, n, d)
    opt = np.linalg.norm(dense @ oracle.exact_l2(dense, b) - b)
    sol = lpreg.solve_lp(ToeplitzOperator(n, d, g), b, 2.0, 0.5, np.random.default_rng(1))
    assert sol.cost <= 1.5 * opt


def test_solve_lp_dense_fallback():
    A = np.random.default_rng(0).standard_normal((3, 5))
    sol = lpreg.solve_lp(DenseOperator(A), np.ones(3), 1.5, 0.5, np.random.default_rng(0))
    assert sol.flags == ("dense-fallback",)
    assert sol.cost < 1e-6


def test_solve_lp_validation():
    op = DenseOperator(np.ones((10, 2)))
    with pytest.raises(ValueError, match="p must"):
        lpreg.solve_lp(op, np.ones(10), 4.5, 0.5, np.random.default_rng(0))
    with pytest.raises(ValueError, match="eps"):
        lpreg.solve_lp(op, np.ones(10), 2.0, 1.5, np.random.default_rng(0))
    with pytest.raises(ValueError, match="target"):
        lpreg.solve_lp(op, np.ones(9), 2.0, 0.5, np.random.default_rng(0))


def test_failure_flag_registry():
    assert lpreg.FAILURE_FLAGS == frozenset(
        {"lewis-nonconverged", "irls-nonconverged", "rank-deficient"}
    )
