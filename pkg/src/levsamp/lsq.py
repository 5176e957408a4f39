"""Sampling-based (1+eps) least squares for matvec-access operators.

``solve_l2`` sketches the augmented system [A | b] with repeated halving,
solves the sampled problem densely, and boosts the 99/100 per-repetition
success probability by keeping the candidate with the smallest true residual
across ceil(log2(1/delta)) independent repetitions (one operator apply per
candidate to score it). ``solve_autoregression`` and ``solve_dynamical`` wrap
the same path around the Toeplitz and Toeplitz-difference designs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULTS, Params
from .leverage import repeated_halving
from .operators import (
    AugmentedOperator,
    LinearOperator,
    ar_design_operator,
    dense_rows,
    dynamical_design_operator,
)
from .util import as_rng, ceil_log2


@dataclass
class L2Solution:
    """Result of a sampled least-squares solve.

    ``residual`` is recomputed from x through one true operator apply.
    ``matvecs_used`` counts the applies/adjoint applies of A consumed by the
    whole call (all repetitions).
    """

    x: np.ndarray
    residual: float
    repetitions_used: int
    matvecs_used: int
    flags: tuple[str, ...] = ()


def l2_sample_size(d: int, eps: float, params: Params = DEFAULTS) -> int:
    """Sampled-system rows: ceil(c_sample_l2 * (d+1) * (ln(d+1)+1) / eps^2)."""
    m = d + 1
    return int(np.ceil(params.c_sample_l2 * m * (np.log(m) + 1.0) / eps**2))


def sketch_solve_l2(A: LinearOperator, b, eps: float, rng, params: Params = DEFAULTS):
    """One sampling repetition: returns (x, sampled_rows, flags).

    sampled_rows is the rescaled dense sample of [A | b] (last column the
    sampled target), kept so callers can check optimality on the sample.
    """
    rng = as_rng(rng)
    C = AugmentedOperator(A, b)
    r = l2_sample_size(A.d, eps, params)
    S, sampled = repeated_halving(C, r, eps, rng, params)
    SA = sampled[:, :-1]
    Sb = sampled[:, -1]
    x, _, rank, _ = np.linalg.lstsq(SA, Sb, rcond=None)
    flags = S.flags
    if rank < A.d:
        flags = flags + ("rank-deficient",)
    return x, sampled, flags


def solve_l2(
    A: LinearOperator,
    b,
    eps: float,
    delta: float,
    rng,
    repetitions: int | None = None,
    params: Params = DEFAULTS,
) -> L2Solution:
    """Approximate argmin_x ||Ax - b|| with residual <= (1+eps) * optimum.

    Parameters
    ----------
    A : operator with n rows, d columns (n > d for the sampled path; n <= d
        falls back to one dense solve).
    b : target vector of length n.
    eps : target accuracy in (0, 1).
    delta : failure probability; ceil(log2(1/delta)) repetitions are run and
        the minimum true residual wins (ties to the earliest repetition).
    rng : seed or Generator; repetitions use independently spawned streams.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (A.n,):
        raise ValueError(f"target must have shape ({A.n},), got {b.shape}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    rng = as_rng(rng)
    start_count = A.matvec_count

    if A.n <= A.d:
        dense = dense_rows(A)
        x, _, rank, _ = np.linalg.lstsq(dense, b, rcond=None)
        residual = float(np.linalg.norm(A.apply(x) - b))
        flags = ("dense-fallback",) + (("rank-deficient",) if rank < A.d else ())
        return L2Solution(
            x=x,
            residual=residual,
            repetitions_used=1,
            matvecs_used=A.matvec_count - start_count,
            flags=flags,
        )

    if repetitions is None:
        repetitions = max(1, int(np.ceil(np.log2(1.0 / delta))))
    streams = rng.spawn(repetitions)
    best: L2Solution | None = None
    for k in range(repetitions):
        x, _, flags = sketch_solve_l2(A, b, eps, streams[k], params)
        residual = float(np.linalg.norm(A.apply(x) - b))
        if best is None or residual < best.residual:
            best = L2Solution(
                x=x,
                residual=residual,
                repetitions_used=repetitions,
                matvecs_used=0,
                flags=flags,
            )
    best.matvecs_used = A.matvec_count - start_count
    return best


def solve_autoregression(
    series,
    d: int,
    eps: float,
    delta: float,
    rng,
    pad_origin_zero: bool = False,
    repetitions: int | None = None,
    params: Params = DEFAULTS,
) -> L2Solution:
    """Fit x in b_t ~= sum_i x_i b_(t-i) by sampled least squares.

    The series supplies both design and target: observations 1..n+d-1 fill
    the Toeplitz design, observations d+1..n+d are the target.
    pad_origin_zero prepends a single zero sample (the convention that the
    series starts at a zero origin) before splitting.
    """
    series = np.asarray(series, dtype=float)
    if pad_origin_zero:
        series = np.concatenate([[0.0], series])
    if series.ndim != 1 or series.size < d + 2:
        raise ValueError(f"series too short for order d = {d}")
    A = ar_design_operator(series, d)
    b = series[d:]
    return solve_l2(A, b, eps, delta, rng, repetitions=repetitions, params=params)


def solve_dynamical(
    series,
    d: int,
    h: float,
    eps: float,
    delta: float,
    rng,
    use_difference: bool = True,
    pad_origin_zero: bool = False,
    repetitions: int | None = None,
    params: Params = DEFAULTS,
) -> L2Solution:
    """Fit finite-difference dynamics: sampled least squares on T * U * D.

    h is the sampling step of the underlying continuous system; the diagonal
    factor rescales the difference columns by h^-(i-1). With
    use_difference=False and h = 1 the path reduces bit-for-bit to
    solve_autoregression on the same stream.
    """
    series = np.asarray(series, dtype=float)
    if pad_origin_zero:
        series = np.concatenate([[0.0], series])
    if series.ndim != 1 or series.size < d + 2:
        raise ValueError(f"series too short for order d = {d}")
    A = dynamical_design_operator(series, d, h, use_difference=use_difference)
    b = series[d:]
    return solve_l2(A, b, eps, delta, rng, repetitions=repetitions, params=params)
