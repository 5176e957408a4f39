"""Sampled least squares and the AR / dynamical wrappers."""
import numpy as np
import pytest

from levsamp import lsq, oracle
from levsamp.config import DEFAULTS
from levsamp.operators import DenseOperator, ToeplitzOperator
from levsamp.util import ceil_log2


def _toeplitz_problem(n, d, seed, noise=0.0):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(n + d - 1)
    T = ToeplitzOperator(n, d, g)
    b = T.apply(rng.standard_normal(d))
    if noise:
        b = b + noise * rng.standard_normal(n)
    return g, ToeplitzOperator(n, d, g), b


def test_consistent_system_recovered_exactly():
    n, d = 300, 3
    g = np.random.default_rng(1).standard_normal(n + d - 1)
    x_true = np.array([1.0, -2.0, 0.5])
    b = ToeplitzOperator(n, d, g).apply(x_true)
    sol = lsq.solve_l2(ToeplitzOperator(n, d, g), b, 0.5, 0.1, np.random.default_rng(0))
    np.testing.assert_allclose(sol.x, x_true, atol=1e-10)
    assert sol.residual < 1e-10 * np.linalg.norm(b)


def test_residual_within_eps_of_dense_optimum():
    n, d, eps = 300, 3, 0.5
    for seed in range(5):
        g, T, b = _toeplitz_problem(n, d, 100 + seed, noise=0.3)
        dense = oracle.toeplitz_dense(g, n, d)
        opt = np.linalg.norm(dense @ oracle.exact_l2(dense, b) - b)
        sol = lsq.solve_l2(T, b, eps, 0.1, np.random.default_rng(seed))
        assert sol.residual <= (1.0 + eps) * opt
        # The true optimum can never be beaten.
        assert sol.residual >= opt - 1e-9 * opt


def test_solution_optimal_on_its_sample():
    n, d = 300, 4
    _, T, b = _toeplitz_problem(n, d, 5, noise=0.5)
    x, sampled, _ = lsq.sketch_solve_l2(T, b, 0.5, np.random.default_rng(2))
    SA, Sb = sampled[:, :-1], sampled[:, -1]
    # Normal equations of the sampled system hold at the returned x.
    np.testing.assert_allclose(SA.T @ (SA @ x - Sb), np.zeros(d), atol=1e-8)


def test_repetition_count_and_boosting():
    n, d = 300, 3
    _, T, b = _toeplitz_problem(n, d, 9, noise=0.3)
    sol = lsq.solve_l2(T, b, 0.5, 0.1, np.random.default_rng(0))
    assert sol.repetitions_used == 4  # ceil(log2(1/0.1))
    _, T2, _ = _toeplitz_problem(n, d, 9, noise=0.3)
    sol2 = lsq.solve_l2(T2, b, 0.5, 0.5, np.random.default_rng(0))
    assert sol2.repetitions_used == 1
    _, T3, _ = _toeplitz_problem(n, d, 9, noise=0.3)
    sol3 = lsq.solve_l2(T3, b, 0.5, 0.5, np.random.default_rng(0), repetitions=6)
    assert sol3.repetitions_used == 6
    # More repetitions never hurt: the minimum true residual is kept.
    assert sol3.residual <= sol2.residual + 1e-12


def test_matvec_budget_logarithmic():
    n, d = 300, 3
    _, T, b = _toeplitz_problem(n, d, 11, noise=0.3)
    sol = lsq.solve_l2(T, b, 0.5, 0.1, np.random.default_rng(1))
    cap = DEFAULTS.c_matvec_budget * ceil_log2(n) ** 2 * sol.repetitions_used
    assert sol.matvecs_used <= cap
    assert sol.matvecs_used == T.matvec_count


def test_dense_fallback_wide_system():
    A = np.random.default_rng(0).standard_normal((3, 5))
    sol = lsq.solve_l2(DenseOperator(A), np.ones(3), 0.5, 0.1, np.random.default_rng(0))
    assert "dense-fallback" in sol.flags
    assert "rank-deficient" in sol.flags
    assert sol.residual < 1e-10


def test_solve_l2_validation():
    _, T, b = _toeplitz_problem(64, 3, 0)
    with pytest.raises(ValueError, match="target"):
        lsq.solve_l2(T, b[:-1], 0.5, 0.1, np.random.default_rng(0))
    with pytest.raises(ValueError, match="delta"):
        lsq.solve_l2(T, b, 0.5, 0.0, np.random.default_rng(0))


def test_l2_sample_size_formula():
    m = 7 + 1
    assert lsq.l2_sample_size(7, 0.5) == int(
        np.ceil(DEFAULTS.c_sample_l2 * m * (np.log(m) + 1.0) / 0.25)
    )


def test_autoregression_recovers_noiseless_coefficients():
    # AR(2) with characteristic roots 1 and 0.5: b_t = 1.5 b_(t-1) - 0.5 b_(t-2).
    coef = np.array([1.5, -0.5])
    series = np.empty(400)
    series[0], series[1] = 1.0, 2.0
    for t in range(2, 400):
        series[t] = coef @ series[t - 2 : t][::-1]
    sol = lsq.solve_autoregression(series, 2, 0.5, 0.1, np.random.default_rng(0))
    np.testing.assert_allclose(sol.x, coef, atol=1e-8)
    assert sol.residual <= 1e-7 * np.linalg.norm(series[2:])


def test_dynamical_without_difference_matches_autoregression():
    series = np.random.default_rng(7).standard_normal(320)
    a = lsq.solve_autoregression(series, 4, 0.5, 0.25, np.random.default_rng(3))
    b = lsq.solve_dynamical(
        series, 4, 1.0, 0.5, 0.25, np.random.default_rng(3), use_difference=False
    )
    assert np.array_equal(a.x, b.x)
    assert a.residual == b.residual
    assert a.matvecs_used == b.matvecs_used


def test_dynamical_difference_path_rank_flag():
    # The difference factor has rank d-1 by construction, so the sampled
    # system is reported rank-deficient rather than silently regularized.
    series = np.random.default_rng(8).standard_normal(320)
    sol = lsq.solve_dynamical(series, 3, 0.5, 0.5, 0.25, np.random.default_rng(1))
    assert "rank-deficient" in sol.flags
    assert np.isfinite(sol.residual)


def test_pad_origin_zero():
    series = np.random.default_rng(7).standard_normal(320)
    plain = lsq.solve_autoregression(series, 4, 0.5, 0.25, np.random.default_rng(3))
    padded = lsq.solve_autoregression(
        series, 4, 0.5, 0.25, np.random.default_rng(3), pad_origin_zero=True
    )
    assert not np.array_equal(plain.x, padded.x)
    # Padding rescues a series exactly one row short of overdetermined.
    short = series[: 2 * 4]
    with pytest.raises(ValueError, match="underdetermined"):
        lsq.solve_autoregression(short, 4, 0.5, 0.25, np.random.default_rng(0))
    sol = lsq.solve_autoregression(
        short, 4, 0.5, 0.25, np.random.default_rng(0), pad_origin_zero=True
    )
    assert sol.x.shape == (4,)
    # Far too short is rejected before any padding could matter.
    with pytest.raises(ValueError, match="too short"):
        lsq.solve_autoregression(series[:5], 4, 0.5, 0.25, np.random.default_rng(0))


def test_dynamical_overflow_step_rejected():
    series = np.random.default_rng(0).standard_normal(200)
    with pytest.raises(ValueError, match="overflow"):
        lsq.solve_dynamical(series, 60, 1e-30, 0.5, 0.25, np.random.default_rng(0))
