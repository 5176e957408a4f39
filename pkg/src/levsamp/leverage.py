"""Leverage-score estimation and row sampling through matvec access.

The central routine is ``repeated_halving``: uniformly drop half the rows
(index bookkeeping only), recurse until the subset is small enough to read
densely, then use the recursive sample to estimate generalized leverage
scores of the full operator and draw a spectral row sample from them. The
operator is touched only through O(log n) applies per recursion level plus
structural row reads of the sampled rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULTS, Params
from .operators import LinearOperator, RowSubsetOperator, dense_rows
from .util import as_rng, ceil_log2


@dataclass
class LeverageEstimates:
    """Nonnegative per-row (or per-column) score estimates.

    ``claimed_factor`` is the multiplicative accuracy the producing routine
    aims for; ``flags`` records degeneracies (e.g. an all-zero matrix).
    """

    scores: np.ndarray
    claimed_factor: float = 2.0
    flags: tuple[str, ...] = ()


@dataclass
class SamplingMatrix:
    """Row-sampling operator S stored as (source index, scale) pairs.

    With r i.i.d. draws from probabilities p and scales 1/sqrt(r * p_j),
    E[S^T S] = I. ``probabilities`` keeps the full distribution used.
    """

    indices: np.ndarray
    scales: np.ndarray
    probabilities: np.ndarray
    n: int
    flags: tuple[str, ...] = ()

    @property
    def r(self) -> int:
        return int(self.indices.size)

    @property
    def samples(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.scales.tolist()))

    def gather(self, rows: np.ndarray) -> np.ndarray:
        """Apply S to a dense matrix whose rows the samples index."""
        rows = np.asarray(rows, dtype=float)
        if rows.shape[0] != self.n:
            raise ValueError(f"gather expects {self.n} rows, got {rows.shape[0]}")
        return rows[self.indices] * self.scales[:, None]

    def as_dense(self) -> np.ndarray:
        S = np.zeros((self.r, self.n))
        S[np.arange(self.r), self.indices] = self.scales
        return S


def identity_sampling(n: int) -> SamplingMatrix:
    """Exact sampling: every row once, unit scale (r = n, p uniform)."""
    return SamplingMatrix(
        indices=np.arange(n),
        scales=np.ones(n),
        probabilities=np.full(n, 1.0 / n),
        n=n,
        flags=("exact",),
    )


def _pinv_gram(B: np.ndarray, rcond_factor: float):
    """SVD pieces of (B^T B)^+ with cutoff sigma_max * max(dims) * rcond_factor."""
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    if s.size:
        cutoff = s[0] * max(B.shape) * rcond_factor
        keep = s > cutoff
        u, s, vt = u[:, keep], s[keep], vt[keep]
    return u, s, vt


def generalized_leverage_scores(
    C: LinearOperator,
    B: np.ndarray,
    rng,
    params: Params = DEFAULTS,
) -> LeverageEstimates:
    """Estimate tau_i = c_i^T (B^T B)^+ c_i for every row c_i of the operator C.

    B is a dense spectral proxy for C. The scores are squared norms of
    G B (B^T B)^+ C^T columns where G is Gaussian with c_gaussian * ceil(log2 n)
    rows, so C is touched through exactly that many apply calls.
    """
    rng = as_rng(rng)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[1] != C.d:
        raise ValueError(f"proxy must have {C.d} columns, got shape {B.shape}")
    t = int(params.c_gaussian) * ceil_log2(C.n)
    flags: tuple[str, ...] = ()
    u, s, vt = _pinv_gram(B, params.pinv_rcond_factor)
    if s.size == 0:
        return LeverageEstimates(scores=np.zeros(C.n), flags=("zero-matrix",))
    if s.size < min(B.shape):
        flags = ("rank-deficient-proxy",)
    # M = G B (B^T B)^+ = (G u) diag(1/s) vt, shape t x d.
    G = rng.standard_normal((t, B.shape[0]))
    M = (G @ u) / s[None, :] @ vt
    images = np.empty((t, C.n))
    for k in range(t):
        images[k] = C.apply(M[k])
    scores = np.sum(images**2, axis=0) / t
    if not scores.any():
        flags = flags + ("zero-matrix",)
    return LeverageEstimates(scores=scores, claimed_factor=2.0, flags=flags)


def sample_rows(scores, r: int, rng) -> SamplingMatrix:
    """Draw r i.i.d. rows proportional to scores, scaled by 1/sqrt(r * p_j).

    Zero scores get probability exactly zero. O(n + r) via cumulative sums
    and binary search.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a nonempty vector")
    if r < 1:
        raise ValueError("sample size r must be >= 1")
    if (scores < 0).any() or not np.isfinite(scores).all():
        raise ValueError("scores must be finite and nonnegative")
    total = scores.sum()
    if total <= 0:
        raise ValueError("cannot sample: all scores are zero")
    p = scores / total
    cum = np.cumsum(p)
    cum[-1] = 1.0
    u = rng.random(r)
    idx = np.searchsorted(cum, u, side="right")
    idx = np.minimum(idx, scores.size - 1)
    scales = 1.0 / np.sqrt(r * p[idx])
    return SamplingMatrix(indices=idx, scales=scales, probabilities=p, n=scores.size)


def base_case_rows(d: int, eps: float, params: Params = DEFAULTS) -> int:
    """Recursion threshold: rows <= max(c_base * d * (ln d + 1) / eps^2, 4d) are read densely."""
    return int(max(params.c_base * d * (np.log(d) + 1.0) / eps**2, 4 * d))


def repeated_halving(
    C: LinearOperator,
    target_rows: int,
    eps: float,
    rng,
    params: Params = DEFAULTS,
    _depth: int = 0,
):
    """Spectral row sample of C: returns (SamplingMatrix, sampled dense rows).

    The sampled-and-rescaled row matrix C~ satisfies
    ||C~ x||^2 = (1 +/- eps) ||C x||^2 for all x with the stated probability
    when target_rows matches the usual (d log d)/eps^2 scaling. At or below
    the base-case threshold (or when target_rows >= n) the exact rows are
    returned with identity sampling.
    """
    if eps <= 0 or eps >= 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if _depth > ceil_log2(max(C.n, 2)) + 1:
        raise RuntimeError("repeated halving recursed past its depth bound")
    rng = as_rng(rng)
    base = base_case_rows(C.d, eps, params)
    if C.n <= base or target_rows >= C.n:
        return identity_sampling(C.n), dense_rows(C)
    half = int(np.ceil(C.n / 2))
    half_idx = np.sort(rng.choice(C.n, size=half, replace=False))
    C_half = RowSubsetOperator(C, half_idx)
    if C_half.n > base:
        _, proxy = repeated_halving(C_half, target_rows, eps, rng, params, _depth + 1)
    else:
        proxy = dense_rows(C_half)
    est = generalized_leverage_scores(C, proxy, rng, params)
    scores = est.scores
    if not scores.any():
        # Degenerate proxy (e.g. the uniform half caught only zero rows):
        # fall back to uniform sampling rather than dividing by zero mass.
        scores = np.ones(C.n)
        est.flags = est.flags + ("uniform-fallback",)
    S = sample_rows(scores, target_rows, rng)
    sampled = dense_rows(C, S.indices) * S.scales[:, None]
    if est.flags:
        S = SamplingMatrix(
            indices=S.indices,
            scales=S.scales,
            probabilities=S.probabilities,
            n=S.n,
            flags=S.flags + est.flags,
        )
    return S, sampled
