"""lp regression (1 <= p < 4) by Lewis-weight sampling through matvec access.

``lewis_weights_fixed_point`` runs the contraction
    w_i <- (c_i^T (C^T W^(1-2/p) C)^+ c_i)^(p/2)
on a dense matrix. ``approx_lewis_form`` reproduces it for operators: halve
rows uniformly, recurse, estimate the per-row quadratic form of the
recursive state through a Gaussian sketch of its factor (O(log n) applies),
keep rows by Bernoulli draws with probabilities proportional to u_i^(p/2),
rescale kept rows by p_i^(-1/p), and run the dense fixed point on the sample.
``solve_lp`` draws the final i.i.d. Lewis sample and solves it with damped
IRLS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULTS, Params
from .operators import AugmentedOperator, LinearOperator, RowSubsetOperator, dense_rows
from .util import as_rng, ceil_log2

FAILURE_FLAGS = frozenset({"lewis-nonconverged", "irls-nonconverged", "rank-deficient"})


@dataclass
class LewisState:
    """Converged Lewis-weight data for a (sampled) matrix.

    ``Q`` is the inverse quadratic form (C^T W^(1-2/p) C)^+ whose evaluation
    at a row gives that row's sampling weight to the power 2/p; ``F`` is a
    factor with Q = F^T F. ``weights`` are the weights of the rows the state
    was fitted on.
    """

    p: float
    weights: np.ndarray
    Q: np.ndarray
    F: np.ndarray
    iterations: int
    converged: bool
    flags: tuple[str, ...] = ()


@dataclass
class LpSolution:
    """x and its cost ||Ax - b||_p (the norm itself, not its p-th power)."""

    x: np.ndarray
    cost: float
    repetitions_used: int
    matvecs_used: int
    flags: tuple[str, ...] = ()


def _validate_p(p: float) -> None:
    if not 1.0 <= p < 4.0:
        raise ValueError(f"p must lie in [1, 4), got {p}")


def lewis_weights_fixed_point(
    C,
    p: float,
    tol: float | None = None,
    max_iter: int | None = None,
    params: Params = DEFAULTS,
) -> LewisState:
    """Lewis weights of a dense matrix by fixed-point iteration.

    Converges geometrically for p < 4; at p = 2 the exponent on W vanishes
    and the first iteration already lands on the leverage scores. Stops when
    the largest relative weight change drops below ``tol``; non-convergence
    within ``max_iter`` is flagged, not raised.
    """
    _validate_p(p)
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] < 1:
        raise ValueError("need a nonempty 2-d matrix")
    tol = params.lewis_tol if tol is None else tol
    max_iter = params.lewis_max_iter if max_iter is None else max_iter
    n, m = C.shape
    if not C.any():
        return LewisState(
            p=p,
            weights=np.zeros(n),
            Q=np.zeros((m, m)),
            F=np.zeros((0, m)),
            iterations=0,
            converged=True,
            flags=("zero-matrix",),
        )
    alpha = 0.5 - 1.0 / p
    w = np.ones(n)
    converged = False
    iterations = 0
    u = s = vt = None
    for iterations in range(1, max_iter + 1):
        # Zero rows keep weight zero; guard their 0^alpha against alpha < 0.
        B = C * (np.where(w > 0, w, 1.0) ** alpha)[:, None]
        u, s, vt = np.linalg.svd(B, full_matrices=False)
        if s.size:
            keep = s > s[0] * max(B.shape) * params.pinv_rcond_factor
            s, vt = s[keep], vt[keep]
        X = (C @ vt.T) / s[None, :] if s.size else np.zeros((n, 0))
        w_new = np.sum(X**2, axis=1) ** (p / 2.0)
        change = float(np.max(np.abs(w_new - w) / np.maximum(w_new, 1e-300)))
        w = w_new
        if change <= tol:
            converged = True
            break
    flags: tuple[str, ...] = () if converged else ("lewis-nonconverged",)
    if s.size < m:
        flags = flags + ("rank-deficient",)
    F = vt / s[:, None] if s.size else np.zeros((0, m))
    # Q = (C^T W^(1-2/p) C)^+ = F^T F from the SVD of the final reweighted matrix.
    return LewisState(
        p=p,
        weights=w,
        Q=F.T @ F,
        F=F,
        iterations=iterations,
        converged=converged,
        flags=flags,
    )


def _row_quadratic_estimates(C: LinearOperator, F: np.ndarray, rng, params: Params) -> np.ndarray:
    """JL estimates of c_i^T F^T F c_i for all rows of C via O(log n) applies."""
    t = int(params.c_gaussian) * ceil_log2(C.n)
    if F.shape[0] == 0:
        return np.zeros(C.n)
    G = rng.standard_normal((t, F.shape[0]))
    M = G @ F
    images = np.empty((t, C.n))
    for k in range(t):
        images[k] = C.apply(M[k])
    return np.sum(images**2, axis=0) / t


def approx_lewis_form(
    C: LinearOperator,
    p: float,
    rng,
    theta: float = 0.0,
    params: Params = DEFAULTS,
) -> LewisState:
    """Lewis-weight state for an operator's row set, matvec access only.

    theta > 0 reinstates the n^(theta/2) oversampling factor explicitly;
    at the default theta = 0 that factor is absorbed into c_lewis_sample.
    """
    _validate_p(p)
    rng = as_rng(rng)
    n, m = C.n, C.d
    if n <= m + 1:
        return lewis_weights_fixed_point(dense_rows(C), p, params=params)
    half = int(np.ceil(n / 2))
    half_idx = np.sort(rng.choice(n, size=half, replace=False))
    inner = approx_lewis_form(RowSubsetOperator(C, half_idx), p, rng, theta, params)

    u = _row_quadratic_estimates(C, inner.F, rng, params)
    log_term = np.log(max(m, 2))
    c_eff = params.c_lewis_sample * n ** (theta / 2.0)
    flags = tuple(f for f in inner.flags if f != "rank-deficient")
    raw = m ** (p / 2.0) * log_term * np.maximum(u, 0.0) ** (p / 2.0)
    # Guard against sample explosion: keep the expected sample below 3n/4.
    guard = 0
    while c_eff * raw.sum() > 0.75 * n and guard < 40:
        c_eff *= 0.5
        guard += 1
    if guard:
        flags = flags + ("sample-explosion-damped",)
    probs = np.minimum(1.0, c_eff * raw)
    keep = np.flatnonzero(rng.random(n) < probs)
    tries = 0
    while keep.size < m + 1 and tries < 6:
        # Too few rows to carry the quadratic form: double the sampling rate.
        c_eff *= 2.0
        probs = np.minimum(1.0, c_eff * raw)
        keep = np.flatnonzero(rng.random(n) < probs)
        tries += 1
        flags = flags + ("sparse-sample-retry",) if tries == 1 else flags
    if keep.size == 0:
        raise RuntimeError("Bernoulli row sampling kept no rows")
    rows = dense_rows(C, keep) * (probs[keep] ** (-1.0 / p))[:, None]
    state = lewis_weights_fixed_point(rows, p, params=params)
    state.flags = tuple(dict.fromkeys(state.flags + flags))
    return state


def lewis_sample(
    C: LinearOperator,
    p: float,
    r: int,
    rng,
    params: Params = DEFAULTS,
):
    """Final i.i.d. Lewis-weight row sample of an operator.

    Returns (indices, scales, probabilities, flags): r draws proportional to
    estimated Lewis weights, each row rescaled by (r * pi_j)^(-1/p) so that
    E||S C x||_p^p = ||C x||_p^p.
    """
    _validate_p(p)
    rng = as_rng(rng)
    state = approx_lewis_form(C, p, rng, params=params)
    u = _row_quadratic_estimates(C, state.F, rng, params)
    wts = np.maximum(u, 0.0) ** (p / 2.0)
    flags = state.flags
    if not wts.any():
        wts = np.ones(C.n)
        flags = flags + ("uniform-fallback",)
    pi = wts / wts.sum()
    cum = np.cumsum(pi)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(r), side="right")
    idx = np.minimum(idx, C.n - 1)
    scales = (r * pi[idx]) ** (-1.0 / p)
    return idx, scales, pi, flags


def _irls(rows: np.ndarray, rhs: np.ndarray, p: float, tol: float, params: Params):
    """Damped IRLS for the sampled lp problem; p = 1 smoothed to 1 + 1e-9 inside."""
    p_eff = max(p, 1.0 + 1e-9)
    x = np.linalg.lstsq(rows, rhs, rcond=None)[0]
    res = rows @ x - rhs
    cost = float(np.sum(np.abs(res) ** p))
    converged = False
    for _ in range(params.irls_max_iter):
        floor = 1e-10 * max(1.0, float(np.max(np.abs(res), initial=0.0)))
        wts = np.maximum(np.abs(res), floor) ** (p_eff - 2.0)
        sw = np.sqrt(wts)
        x_new = np.linalg.lstsq(rows * sw[:, None], rhs * sw, rcond=None)[0]
        step = 1.0
        x_try = x_new
        for _ in range(40):
            x_try = x + step * (x_new - x)
            cost_try = float(np.sum(np.abs(rows @ x_try - rhs) ** p))
            if cost_try <= cost * (1 + 1e-12) or step < 1e-8:
                break
            step *= 0.5
        res = rows @ x_try - rhs
        prev, cost = cost, float(np.sum(np.abs(res) ** p))
        x = x_try
        if abs(prev - cost) <= tol * max(cost, 1e-300):
            converged = True
            break
    return x, converged


def lp_sample_size(d: int, eps: float, params: Params = DEFAULTS) -> int:
    m = d + 1
    return int(np.ceil(params.c_lp_final * m * np.log(m) / eps**2))


def solve_lp(
    A: LinearOperator,
    b,
    p: float,
    eps: float,
    rng,
    repetitions: int = 3,
    params: Params = DEFAULTS,
) -> LpSolution:
    """Approximate argmin_x ||Ax - b||_p for p in [1, 4).

    Each repetition draws r_p = ceil(c_lp_final * (d+1) ln(d+1) / eps^2)
    rows by Lewis-weight sampling of [A | b] and solves the sampled problem
    with IRLS to relative cost tolerance eps/10; the candidate with the
    smallest true cost (one operator apply each) wins.
    """
    _validate_p(p)
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.n,):
        raise ValueError(f"target must have shape ({A.n},), got {b.shape}")
    rng = as_rng(rng)
    start_count = A.matvec_count

    if A.n <= A.d:
        x, _ = _irls(dense_rows(A), b, p, tol=min(eps / 10.0, 1e-6), params=params)
        cost = float(np.sum(np.abs(A.apply(x) - b) ** p) ** (1.0 / p))
        return LpSolution(
            x=x,
            cost=cost,
            repetitions_used=1,
            matvecs_used=A.matvec_count - start_count,
            flags=("dense-fallback",),
        )

    C = AugmentedOperator(A, b)
    r = lp_sample_size(A.d, eps, params)
    streams = rng.spawn(max(1, repetitions))
    best_x = None
    best_cost = np.inf
    best_flags: tuple[str, ...] = ()
    for stream in streams:
        idx, scales, _, flags = lewis_sample(C, p, r, stream, params)
        rows = dense_rows(C, idx) * scales[:, None]
        x, irls_ok = _irls(rows[:, :-1], rows[:, -1], p, tol=eps / 10.0, params=params)
        if not irls_ok:
            flags = flags + ("irls-nonconverged",)
        cost = float(np.sum(np.abs(A.apply(x) - b) ** p) ** (1.0 / p))
        if cost < best_cost:
            best_x, best_cost, best_flags = x, cost, flags
    return LpSolution(
        x=best_x,
        cost=best_cost,
        repetitions_used=max(1, repetitions),
        matvecs_used=A.matvec_count - start_count,
        flags=best_flags,
    )
