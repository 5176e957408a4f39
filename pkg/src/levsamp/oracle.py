"""Dense reference computations used to validate the sampling paths.

Everything here is deliberately brute-force and kept independent of the
sampling machinery it checks: the oracles are written against the defining
formulas (index arithmetic, normal equations, long fixed points) and frozen
before the randomized solvers are tuned. Capped at small sizes; never used
inside a solver.
"""
from __future__ import annotations

import numpy as np

from .operators import LinearOperator, _record_materialization

MATERIALIZE_CAP = 10_000_000


def toeplitz_dense(g, n: int, d: int) -> np.ndarray:
    """Dense n x d Toeplitz matrix straight from the definition A[i][j] = g[i-j+d-1]."""
    g = np.asarray(g, dtype=float)
    if g.shape != (n + d - 1,):
        raise ValueError(f"generating sequence must have length {n + d - 1}, got {g.shape}")
    i = np.arange(n)[:, None]
    j = np.arange(d)[None, :]
    return g[i - j + d - 1]


def materialize(op: LinearOperator, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """Dense form of an operator via d basis-vector applies.

    Refuses above ``cap`` entries; this is a test/report utility, not a path
    the solvers may take.
    """
    if op.n * op.d > cap:
        raise ValueError(f"refusing to materialize {op.n} x {op.d} = {op.n * op.d} entries (cap {cap})")
    out = np.empty((op.n, op.d))
    for j in range(op.d):
        e = np.zeros(op.d)
        e[j] = 1.0
        out[:, j] = op.apply(e)
    _record_materialization(op.n, op.d)
    return out


def exact_l2(A: np.ndarray, b: np.ndarray, method: str = "qr") -> np.ndarray:
    """Least-squares minimizer of ||Ax - b|| by QR (default) or normal equations."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if method == "qr":
        return np.linalg.lstsq(A, b, rcond=None)[0]
    if method == "normal":
        return np.linalg.pinv(A.T @ A) @ (A.T @ b)
    raise ValueError(f"unknown method {method!r}")


def exact_svd(A: np.ndarray):
    return np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)


def exact_leverage(A: np.ndarray) -> np.ndarray:
    """Row leverage scores via the thin SVD (rank-aware)."""
    A = np.asarray(A, dtype=float)
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size:
        keep = s > s[0] * max(A.shape) * np.finfo(float).eps
        u = u[:, keep]
    return np.sum(u**2, axis=1)


def exact_lp(A: np.ndarray, b: np.ndarray, p: float, tol: float = 1e-10, max_iter: int = 20000):
    """High-precision lp regression by iteratively reweighted least squares.

    Returns (x, cost) with cost = ||Ax - b||_p (the norm, not its p-th
    power). p = 1 runs with a 1 + 1e-9 exponent inside the weights.
    Independent of the solver-side IRLS: plain averaging damping, long
    budget, tight tolerance.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if not 1.0 <= p < 4.0:
        raise ValueError(f"p must lie in [1, 4), got {p}")
    p_eff = max(p, 1.0 + 1e-9)
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    res = A @ x - b
    cost = float(np.sum(np.abs(res) ** p))
    scale = max(1.0, float(np.max(np.abs(res), initial=0.0)))
    for _ in range(max_iter):
        r = np.maximum(np.abs(res), 1e-12 * scale)
        w = r ** (p_eff - 2.0)
        sw = np.sqrt(w)
        x_new = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)[0]
        step = 1.0
        for _ in range(60):
            x_try = x + step * (x_new - x)
            res_try = A @ x_try - b
            cost_try = float(np.sum(np.abs(res_try) ** p))
            if cost_try <= cost or step < 1e-12:
                break
            step *= 0.5
        moved = float(np.max(np.abs(x_try - x), initial=0.0))
        x, res = x_try, res_try
        if cost_try <= cost and cost - cost_try <= tol * max(cost, 1e-300) and moved <= tol * max(
            1.0, float(np.max(np.abs(x)))
        ):
            cost = cost_try
            break
        cost = min(cost, cost_try)
    return x, float(np.sum(np.abs(A @ x - b) ** p) ** (1.0 / p))


def exact_lewis(C: np.ndarray, p: float, iters: int = 10000, tol: float = 1e-12) -> np.ndarray:
    """Lewis weights by a long plain fixed point w_i = (c_i^T (C^T W^(1-2/p) C)^+ c_i)^(p/2)."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    w = np.full(n, C.shape[1] / n, dtype=float)
    for _ in range(iters):
        scaled = C * (np.where(w > 0, w, 1.0) ** (0.5 - 1.0 / p))[:, None]
        M = np.linalg.pinv(scaled.T @ scaled)
        quad = np.einsum("ij,jk,ik->i", C, M, C)
        w_new = np.maximum(quad, 0.0) ** (p / 2.0)
        if np.max(np.abs(w_new - w)) <= tol * max(1.0, float(np.max(w_new))):
            return w_new
        w = w_new
    return w


def exact_kernel_ar(points: np.ndarray, d: int, f, targets: np.ndarray):
    """Naive kernel autoregression: every Gram entry by direct summation.

    No band sharing, no cumulative sums: entry (j, j') sums f over the n
    window inner products independently, so any index slip in the fast path
    shows up as a mismatch. Returns (x, residual, gram).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = points.shape[0] - d + 1
    if n < 1 or targets.shape[0] != n:
        raise ValueError("inconsistent series/target sizes")
    gram = np.empty((d, d))
    for j in range(d):
        for jp in range(d):
            dots = np.array(
                [points[i + d - 1 - j] @ points[i + d - 1 - jp] for i in range(n)]
            )
            gram[j, jp] = float(np.sum(f(dots)))
    rhs = np.empty(d)
    for j in range(d):
        dots = np.array([points[i + d - 1 - j] @ targets[i] for i in range(n)])
        rhs[j] = float(np.sum(f(dots)))
    x = np.linalg.pinv(gram) @ rhs
    target_sq = float(np.sum(f(np.einsum("ik,ik->i", targets, targets))))
    residual = float(np.sqrt(max(x @ gram @ x - 2.0 * x @ rhs + target_sq, 0.0)))
    return x, residual, gram


def exact_poly2_lift(points: np.ndarray, d: int) -> np.ndarray:
    """Dense degree-2 lifted design: n*p^2 rows, d columns.

    points holds the n+d-1 design-series points as rows. Block i (0-based)
    column l is the flattened outer product of point i+d-1-l with itself;
    within a block, rows are ordered by row-major pairs (a, c).
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0] - d + 1
    p = points.shape[1]
    if n < 1:
        raise ValueError("need at least d design points")
    if n * p * p * d > MATERIALIZE_CAP:
        raise ValueError("lifted design too large to materialize")
    out = np.empty((n * p * p, d))
    for i in range(n):
        for ell in range(d):
            u = points[i + d - 1 - ell]
            out[i * p * p : (i + 1) * p * p, ell] = np.outer(u, u).reshape(-1)
    return out
