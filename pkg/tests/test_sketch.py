"""Sketching primitives: algebraic identities and estimator statistics."""
import numpy as np
import pytest

import levsamp as lv


def test_countsketch_apply_matches_matrix():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = int(rng.integers(1, 20))
        n = int(rng.integers(1, 30))
        cs = lv.CountSketch.draw(m, n, rng)
        x = rng.standard_normal(n)
        np.testing.assert_allclose(cs.apply(x), cs.matrix() @ x, atol=1e-12)
        X = rng.standard_normal((n, 3))
        np.testing.assert_allclose(cs.apply_columns(X), cs.matrix() @ X, atol=1e-12)


def test_countsketch_skips_zeros():
    cs = lv.CountSketch.draw(4, 6, np.random.default_rng(1))
    x = np.zeros(6)
    np.testing.assert_allclose(cs.apply(x), np.zeros(4))


def test_countsketch_norm_unbiased():
    # E||Sx||^2 = ||x||^2 over the sketch draw.
    rng = np.random.default_rng(2)
    x = rng.standard_normal(15)
    target = float(x @ x)
    total = 0.0
    reps = 4000
    for _ in range(reps):
        cs = lv.CountSketch.draw(8, 15, rng)
        total += float(np.sum(cs.apply(x) ** 2))
    assert abs(total / reps / target - 1.0) < 0.05


def test_tensorsketch_equals_derived_countsketch():
    # The FFT path must agree with the explicit CountSketch on the flattened
    # outer product, bucket (h1[a]+h2[c]) mod m, sign s1[a]*s2[c].
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = int(rng.integers(2, 40))
        p = int(rng.integers(1, 9))
        ts = lv.TensorSketch.draw(m, p, rng)
        u = rng.standard_normal(p)
        lift = np.outer(u, u).reshape(-1)
        h, s = ts.derived_hash_sign()
        direct = np.zeros(m)
        np.add.at(direct, h, s * lift)
        np.testing.assert_allclose(ts.apply_lift(u), direct, atol=1e-12)
        np.testing.assert_allclose(ts.derived_matrix() @ lift, direct, atol=1e-12)


def test_tensorsketch_columns_batch():
    rng = np.random.default_rng(4)
    ts = lv.TensorSketch.draw(16, 5, rng)
    U = rng.standard_normal((5, 7))
    batched = ts.apply_lift_columns(U)
    for j in range(7):
        np.testing.assert_allclose(batched[:, j], ts.apply_lift(U[:, j]), atol=1e-12)


def test_tensorsketch_norm_unbiased():
    rng = np.random.default_rng(5)
    u = rng.standard_normal(4)
    target = float(np.sum(np.outer(u, u) ** 2))
    total = 0.0
    reps = 4000
    for _ in range(reps):
        ts = lv.TensorSketch.draw(16, 4, rng)
        total += float(np.sum(ts.apply_lift(u) ** 2))
    assert abs(total / reps / target - 1.0) < 0.05


def test_gaussian_sketch_concentration():
    # With m = 60 rows the squared-norm estimate lands in [0.5, 2] x truth
    # essentially always; demand >= 99% over seeds.
    rng = np.random.default_rng(6)
    x = rng.standard_normal(30)
    target = float(x @ x)
    hits = 0
    for _ in range(500):
        gs = lv.GaussianSketch.draw(60, 30, rng)
        est = gs.estimate_sq_norm(x)
        hits += 0.5 * target <= est <= 2.0 * target
    assert hits >= 495


def test_gaussian_sketch_column_norms():
    rng = np.random.default_rng(7)
    gs = lv.GaussianSketch.draw(50, 10, rng)
    X = rng.standard_normal((10, 4))
    ests = gs.estimate_col_sq_norms(X)
    for j in range(4):
        assert ests[j] == pytest.approx(gs.estimate_sq_norm(X[:, j]))


def test_median_norm_estimate():
    assert lv.median_norm_estimate([1.0, 9.0, 2.0]) == 2.0
    assert lv.median_norm_estimate([4.0]) == 4.0
    with pytest.raises(ValueError):
        lv.median_norm_estimate([])


def test_sketch_validation():
    with pytest.raises(ValueError):
        lv.CountSketch.draw(0, 3, 0)
    cs = lv.CountSketch.draw(4, 3, 0)
    with pytest.raises(ValueError):
        cs.apply(np.ones(4))
    ts = lv.TensorSketch.draw(8, 3, 0)
    with pytest.raises(ValueError):
        ts.apply_lift_columns(np.ones((4, 2)))
    gs = lv.GaussianSketch.draw(4, 3, 0)
    with pytest.raises(ValueError):
        gs.apply(np.ones(2))
