"""Low-rank approximation by recursive ridge-leverage column sampling.

Columns are halved uniformly, the recursion (run at fixed accuracy 1/2)
produces a small column proxy, ridge leverage scores of all columns are
estimated against the proxy through a JL sketch on the adjoint, and the final
d' = ceil(c_lowrank_cols * (k ln k + k/eps^2)) rescaled columns are read
densely. The returned orthonormal Z spans the top-k left singular directions
of that sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULTS, Params
from .leverage import LeverageEstimates, sample_rows
from .operators import ColumnSubsetOperator, LinearOperator
from .util import as_rng, ceil_log2


@dataclass
class LowRankResult:
    """Rank-k subspace and the column sample that produced it.

    ``fit`` is the Frobenius error ||A - Z Z^T A||_F, computed through
    matvecs only. ``column_indices``/``column_scales`` describe the final
    sampled columns of A.
    """

    Z: np.ndarray
    column_indices: np.ndarray
    column_scales: np.ndarray
    fit: float
    flags: tuple[str, ...] = ()


def lowrank_sample_size(k: int, eps: float, params: Params = DEFAULTS) -> int:
    return int(np.ceil(params.c_lowrank_cols * (k * np.log(max(k, 2)) + k / eps**2)))


def _materialize_columns(A: LinearOperator, indices) -> np.ndarray:
    cols = np.empty((A.n, len(indices)))
    for j, idx in enumerate(indices):
        cols[:, j] = A.col(int(idx))
    return cols


def ridge_leverage_scores(
    A: LinearOperator,
    proxy_cols: np.ndarray,
    k: int,
    rng,
    params: Params = DEFAULTS,
) -> LeverageEstimates:
    """Ridge leverage score of every column: a_j^T (C C^T + lam I)^+ a_j.

    C is the dense column proxy; lam = ||C - C_k||_F^2 / k from its SVD
    (floored and flagged when the proxy is effectively rank <= k). The scores
    are JL estimates through c_gaussian * ceil(log2 d) adjoint applies of A:
    with C = U S V^T, the quadratic form factors as
        (C C^T + lam I)^+ = W^T W + P / lam,
    where W = diag(1/sqrt(s_i^2 + lam)) U^T and P projects off span(U), and a
    Gaussian sketch of the stacked factor gives every column score at once.
    """
    rng = as_rng(rng)
    proxy_cols = np.asarray(proxy_cols, dtype=float)
    if proxy_cols.ndim != 2 or proxy_cols.shape[0] != A.n:
        raise ValueError(f"column proxy must have {A.n} rows, got {proxy_cols.shape}")
    if k < 1:
        raise ValueError("rank k must be >= 1")
    flags: tuple[str, ...] = ()
    U, s, _ = np.linalg.svd(proxy_cols, full_matrices=False)
    tail = float(np.sum(s[k:] ** 2))
    lam = tail / k
    if s.size == 0 or s[0] == 0.0:
        return LeverageEstimates(scores=np.zeros(A.d), flags=("zero-matrix",))
    floor = (s[0] ** 2) * 1e-12
    if lam < floor:
        lam = floor
        flags = ("ridge-floored",)

    t = int(params.c_gaussian) * ceil_log2(max(A.d, 2))
    G1 = rng.standard_normal((t, s.size))
    G2 = rng.standard_normal((t, A.n))
    W = (U / np.sqrt(s**2 + lam)[None, :]).T  # rank x n
    GF = G1 @ W + (G2 - (G2 @ U) @ U.T) / np.sqrt(lam)
    images = np.empty((t, A.d))
    for i in range(t):
        images[i] = A.apply_transpose(GF[i])
    scores = np.sum(images**2, axis=0) / t
    return LeverageEstimates(scores=scores, claimed_factor=2.0, flags=flags)


def _sample_columns(
    A: LinearOperator,
    k: int,
    target_cols: int,
    eps_level: float,
    rng,
    params: Params,
    depth: int = 0,
):
    """Recursive rescaled column sample; returns (dense columns, indices, scales, flags)."""
    if depth > ceil_log2(max(A.d, 2)) + 1:
        raise RuntimeError("column sampling recursed past its depth bound")
    if A.d <= target_cols:
        idx = np.arange(A.d)
        return _materialize_columns(A, idx), idx, np.ones(A.d), ("exact",)
    half = int(np.ceil(A.d / 2))
    half_idx = np.sort(rng.choice(A.d, size=half, replace=False))
    A_half = ColumnSubsetOperator(A, half_idx)
    inner_target = lowrank_sample_size(k, 0.5, params)
    if A_half.d > inner_target:
        proxy, _, _, _ = _sample_columns(A_half, k, inner_target, 0.5, rng, params, depth + 1)
    else:
        proxy = _materialize_columns(A_half, np.arange(A_half.d))
    est = ridge_leverage_scores(A, proxy, k, rng, params)
    scores = est.scores
    flags = est.flags
    if not scores.any():
        scores = np.ones(A.d)
        flags = flags + ("uniform-fallback",)
    S = sample_rows(scores, target_cols, rng)
    cols = _materialize_columns(A, S.indices) * S.scales[None, :]
    return cols, S.indices, S.scales, flags


def lowrank_approx(
    A: LinearOperator,
    k: int,
    eps: float,
    rng,
    params: Params = DEFAULTS,
) -> LowRankResult:
    """Rank-k approximation with Frobenius fit near the best rank-k error.

    Z has orthonormal columns; the projection Z Z^T A plays the role of the
    truncated SVD. k >= min(n, d) short-circuits to an exact orthonormal
    basis. The fit is evaluated as sqrt(||A||_F^2 - ||Z^T A||_F^2) through
    d applies and k adjoint applies.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if k < 1:
        raise ValueError("rank k must be >= 1")
    rng = as_rng(rng)
    flags: tuple[str, ...] = ()
    if k >= min(A.n, A.d):
        k = min(A.n, A.d)
        flags = ("full-rank",)

    target = lowrank_sample_size(k, eps, params)
    cols, idx, scales, sample_flags = _sample_columns(A, k, target, eps, rng, params)
    flags = flags + tuple(f for f in sample_flags if f != "exact")
    U, s, _ = np.linalg.svd(cols, full_matrices=False)
    Z = U[:, :k]
    if Z.shape[1] < k:
        flags = flags + ("rank-deficient-sample",)

    # ||A - Z Z^T A||_F^2 = ||A||_F^2 - ||Z^T A||_F^2 for orthonormal Z.
    frob_sq = 0.0
    for j in range(A.d):
        e = np.zeros(A.d)
        e[j] = 1.0
        frob_sq += float(np.sum(A.apply(e) ** 2))
    proj_sq = 0.0
    for i in range(Z.shape[1]):
        proj_sq += float(np.sum(A.apply_transpose(Z[:, i]) ** 2))
    fit = float(np.sqrt(max(frob_sq - proj_sq, 0.0)))
    return LowRankResult(Z=Z, column_indices=idx, column_scales=scales, fit=fit, flags=flags)
