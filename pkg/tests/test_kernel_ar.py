"""Kernel autoregression: band tables, Gram solves, degree-2 sampling."""
import numpy as np
import pytest

from levsamp import kernel_ar as ka
from levsamp import oracle


def _fixture(seed=42, n=64, p=4, d=3):
    rng = np.random.default_rng(seed)
    series = rng.standard_normal((n + d, p))
    return ka.KernelARProblem.from_series(series, d, "poly2")


def test_kernel_registry():
    assert ka.get_kernel("linear")(np.array([2.0, -3.0])).tolist() == [2.0, -3.0]
    assert ka.get_kernel("poly2")(np.array([3.0]))[0] == 9.0
    assert ka.get_kernel("exp")(np.array([0.0]))[0] == 1.0
    with pytest.raises(ValueError, match="unknown kernel"):
        ka.get_kernel("rbf")
    with pytest.raises(ValueError, match="non-finite"):
        ka.get_kernel("exp")(np.array([1e5]))


def test_lifted_series_target_counts_reads():
    t = ka.LiftedSeriesTarget(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert t.n == 2
    assert t.poly2_entry(1, 0, 1) == 12.0
    assert t.poly2_entry(0, 1, 1) == 4.0
    assert t.reads == 2


def test_poly2_vector_target_decode():
    p = 3
    values = np.arange(2 * p * p, dtype=float)
    t = ka.Poly2VectorTarget(values, p)
    assert t.n == 2
    assert t.poly2_entry(1, 2, 1) == values[1 * 9 + 2 * 3 + 1]
    assert t.reads == 1
    with pytest.raises(ValueError, match="multiple"):
        ka.Poly2VectorTarget(np.ones(10), 3)
    with pytest.raises(TypeError, match="series points"):
        t.point(0)


def test_problem_shapes_and_windows():
    prob = _fixture()
    assert (prob.n, prob.p, prob.d) == (64, 4, 3)
    idx = prob.window_indices()
    assert idx.shape == (64, 3)
    blocks = prob.blocks()
    assert blocks.shape == (64, 4, 3)
    # Block i column l holds design point i + d - 1 - l.
    for i in (0, 10, 63):
        for l in range(3):
            np.testing.assert_array_equal(blocks[i, :, l], prob.points[i + 2 - l])


def test_from_series_validation():
    with pytest.raises(ValueError, match="too short"):
        ka.KernelARProblem.from_series(np.ones((4, 2)), 3, "linear")
    with pytest.raises(ValueError, match="finite"):
        ka.KernelARProblem.from_series(np.array([[np.inf]] * 6), 2, "linear")
    with pytest.raises(ValueError, match="d must"):
        ka.KernelARProblem.from_series(np.ones((6, 2)), 0, "linear")


def test_band_pair_count_matches_enumeration():
    for n, d in [(5, 1), (5, 3), (12, 4), (1, 6), (30, 2)]:
        L = n + d - 1
        brute = sum(1 for i in range(L) for j in range(i, min(i + d, L)))
        assert ka.band_pair_count(n, d) == brute


def test_banded_inner_products_values_and_count():
    pts = np.random.default_rng(0).standard_normal((10, 3))
    table = ka.banded_inner_products(pts, 4)
    assert table.dot_count == ka.band_pair_count(10 - 4 + 1, 4)
    for delta in range(4):
        for s in range(10 - delta):
            assert table.bands[delta][s] == pytest.approx(pts[s] @ pts[s + delta])


def test_gram_via_bands_matches_naive():
    # The shared-band Gram must agree with the entrywise materialized one for
    # every kernel, and consume exactly the closed-form number of dots.
    rng = np.random.default_rng(1)
    for trial in range(10):
        p = int(rng.integers(1, 9))
        d = int(rng.integers(1, 7))
        n = int(rng.integers(2, 65))
        series = rng.standard_normal((n + d, p))
        for name in ("linear", "poly2", "exp"):
            series_s = series / max(1.0, np.abs(series).max())
            prob = ka.KernelARProblem.from_series(series_s, d, name)
            gram, dots = ka.gram_via_bands(prob)
            assert dots == ka.band_pair_count(prob.n, d)
            _, _, gram_naive = oracle.exact_kernel_ar(
                prob.points, d, ka.get_kernel(name).f, prob.target.points
            )
            np.testing.assert_allclose(gram, gram_naive, atol=1e-9 * max(1.0, np.abs(gram_naive).max()))


def test_general_solve_linear_kernel_is_var_least_squares():
    rng = np.random.default_rng(3)
    series = rng.standard_normal((40, 3))
    prob = ka.KernelARProblem.from_series(series, 2, "linear")
    sol = ka.general_kernel_solve(prob)
    # Linear kernel: the lift is the identity, so the solve is least squares
    # on the stacked (n*p) x d windows.
    stacked = prob.blocks().reshape(-1, 2, order="C")
    design = np.vstack([prob.blocks()[i] for i in range(prob.n)])
    target = prob.target.points.reshape(-1)
    x = oracle.exact_l2(design, target)
    np.testing.assert_allclose(sol.x, x, atol=1e-9)
    resid = np.linalg.norm(design @ x - target)
    assert sol.residual == pytest.approx(resid, abs=1e-8)
    assert sol.kernel_eval_count == sol.gram_dot_count + sol.target_dot_count


def test_general_solve_matches_oracle_across_kernels():
    rng = np.random.default_rng(5)
    for name in ("linear", "poly2", "exp"):
        series = rng.standard_normal((24, 2)) * 0.5
        prob = ka.KernelARProblem.from_series(series, 3, name)
        sol = ka.general_kernel_solve(prob)
        x_o, r_o, _ = oracle.exact_kernel_ar(
            prob.points, 3, ka.get_kernel(name).f, prob.target.points
        )
        np.testing.assert_allclose(sol.x, x_o, atol=1e-7)
        assert sol.residual == pytest.approx(r_o, abs=1e-7)


def test_lift_row_identity():
    # Row (a, c) of the lifted block is the elementwise product of window
    # rows a and c, so B^i x = vec(C^i diag(x) C^i^T).
    prob = _fixture(n=8)
    state = ka.build_poly2_sampler(prob, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal(prob.d)
    for i in (0, 5):
        C = state.blocks[i]
        M = C @ np.diag(x) @ C.T
        lifted = np.array(
            [state.row_of_lift(i, a, c) @ x for a in range(prob.p) for c in range(prob.p)]
        )
        np.testing.assert_allclose(lifted, M.reshape(-1), atol=1e-12)


def test_sampler_whitens_the_lift():
    prob = _fixture()
    state = ka.build_poly2_sampler(prob, np.random.default_rng(0))
    lift = oracle.exact_poly2_lift(prob.points, prob.d)
    sv = np.linalg.svd(lift @ state.R, compute_uv=False)
    assert sv.min() > 0.5
    assert sv.max() < 1.5
    assert state.sketch_passes >= 2


def test_block_norm_estimates_concentrate():
    prob = _fixture()
    state = ka.build_poly2_sampler(prob, np.random.default_rng(0))
    lift = oracle.exact_poly2_lift(prob.points, prob.d)
    p = prob.p
    exact = np.empty_like(state.ell)
    for i in range(prob.n):
        Bi = lift[i * p * p : (i + 1) * p * p]
        exact[i] = np.sum((Bi @ state.V) ** 2, axis=0)
    in_band = (state.ell > 0.8 * exact) & (state.ell < 1.2 * exact)
    assert in_band.mean() >= 0.95
    np.testing.assert_allclose(state.gammas, state.ell.sum(axis=0))


def test_sampled_rows_match_exact_distribution():
    prob = _fixture()
    state = ka.build_poly2_sampler(prob, np.random.default_rng(0))
    lift = oracle.exact_poly2_lift(prob.points, prob.d)
    rowsq = np.sum((lift @ state.R) ** 2, axis=1)
    exact = rowsq / rowsq.sum()
    draws = 20000
    counts = np.zeros(lift.shape[0])
    rng = np.random.default_rng(1)
    for _ in range(draws):
        s = ka.sample_poly2_row(state, rng)
        assert 0.0 < s.probability <= 1.0
        counts[s.global_index] += 1
    tv = 0.5 * np.abs(counts / draws - exact).sum()
    assert tv <= 0.15


def test_solve_poly2_end_to_end():
    prob = _fixture()
    state = ka.build_poly2_sampler(prob, np.random.default_rng(0))
    sol = ka.solve_poly2(prob, 0.5, np.random.default_rng(2), state=state)
    n, p = prob.n, prob.p
    lift = oracle.exact_poly2_lift(prob.points, prob.d)
    b = np.array(
        [prob.target.points[i, a] * prob.target.points[i, c]
         for i in range(n) for a in range(p) for c in range(p)]
    )
    opt = np.linalg.norm(lift @ np.linalg.lstsq(lift, b, rcond=None)[0] - b)
    got = np.linalg.norm(lift @ sol.x - b)
    assert got <= 1.5 * opt
    # Sublinear target access: exactly one read per sampled row.
    assert sol.b_reads == sol.samples_used
    assert sol.samples_used < n * p * p
    assert sol.repetitions_used == 1


def test_solve_poly2_repetitions_share_validation_sample():
    prob = _fixture()
    sol = ka.solve_poly2(prob, 0.5, np.random.default_rng(3), repetitions=2)
    # Two fitting samples plus one validation sample.
    assert sol.b_reads == 3 * sol.samples_used
    assert sol.repetitions_used == 2


def test_poly2_p1_equals_squared_series_autoregression():
    # Scalar series: the degree-2 lift of x is x^2, so the kernel fit equals
    # plain least squares on the elementwise-squared series.
    u = np.random.default_rng(9).standard_normal(80)
    prob = ka.KernelARProblem.from_series(u[:, None], 2, "poly2")
    sol = ka.general_kernel_solve(prob)
    sq = u**2
    A = oracle.toeplitz_dense(sq[:-1], 78, 2)
    x = oracle.exact_l2(A, sq[2:])
    np.testing.assert_allclose(sol.x, x, atol=1e-9)


def test_poly2_sampler_validation():
    prob = _fixture(n=8)
    with pytest.raises(ValueError, match="zero design"):
        zero = ka.KernelARProblem(
            points=np.zeros((10, 2)),
            d=3,
            kernel=ka.get_kernel("poly2"),
            target=ka.LiftedSeriesTarget(np.zeros((8, 2))),
        )
        ka.build_poly2_sampler(zero, np.random.default_rng(0))
    lin = ka.KernelARProblem.from_series(np.ones((8, 2)), 2, "linear")
    with pytest.raises(ValueError, match="poly2"):
        ka.build_poly2_sampler(lin, np.random.default_rng(0))
    with pytest.raises(ValueError, match="eps"):
        ka.solve_poly2(prob, 0.0, np.random.default_rng(0))


def test_general_solve_requires_series_target():
    prob = _fixture(n=8)
    vec = ka.KernelARProblem(
        points=prob.points,
        d=prob.d,
        kernel=prob.kernel,
        target=ka.Poly2VectorTarget(np.ones(prob.n * prob.p**2), prob.p),
    )
    with pytest.raises(TypeError, match="lifted-series"):
        ka.general_kernel_solve(vec)
