"""Kernel autoregression on vector series with dot-product kernels.

The design never materializes its lift: block i of the lifted design stacks
phi applied to the window points (b_(i+d-1), ..., b_i) as columns, so every
Gram entry is a sum of kernel evaluations at banded inner products
<b_s, b_t> with |s - t| <= d - 1. ``banded_inner_products`` computes each of
those products exactly once; ``gram_via_bands`` turns them into the d x d
Gram matrix with O(1) sliding-sum work per entry.

For the degree-2 polynomial kernel the lift is explicit
(phi(u) = u (x) u, row-major pairs), and ``build_poly2_sampler`` /
``sample_poly2_row`` / ``solve_poly2`` implement sublinear-in-the-target
regression on it: TensorSketch block-norm estimates pick a block, Gaussian
sketches pick a column of the p x p unsketched block image, the entry is
drawn exactly within that column, and the emitted row's probability is the
exact mixture the sampler used, so rescaled rows satisfy E[S^T S] = I
conditional on the sampler state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import DEFAULTS, Params
from .sketch import GaussianSketch, TensorSketch
from .util import as_rng, ceil_log2


@dataclass(frozen=True)
class DotProductKernel:
    """Kernel k(u, v) = f(<u, v>) with vectorized scalar map f."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]

    def __call__(self, dots):
        # Overflow surfaces as the ValueError below, not as a numpy warning.
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.asarray(self.f(np.asarray(dots, dtype=float)), dtype=float)
        if not np.isfinite(out).all():
            bad = np.flatnonzero(~np.isfinite(np.atleast_1d(out)))
            raise ValueError(
                f"kernel {self.name!r} produced non-finite values at positions {bad[:5].tolist()}"
            )
        return out


KERNELS = {
    "linear": DotProductKernel("linear", lambda t: t),
    "poly2": DotProductKernel("poly2", lambda t: t**2),
    "exp": DotProductKernel("exp", lambda t: np.exp(t)),
}


def get_kernel(name: str) -> DotProductKernel:
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; available: {sorted(KERNELS)}") from None


class LiftedSeriesTarget:
    """Target in lifted-series form: b stacks phi(q_i) for points q_1..q_n.

    Degree-2 entries are computed on demand; ``reads`` counts every entry
    access (the sublinearity currency of the degree-2 solver).
    """

    def __init__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.isfinite(points).all():
            raise ValueError("target points must be finite")
        self.points = points
        self.reads = 0

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def point(self, i: int) -> np.ndarray:
        return self.points[i]

    def poly2_entry(self, block: int, a: int, c: int) -> float:
        self.reads += 1
        return float(self.points[block, a] * self.points[block, c])


class Poly2VectorTarget:
    """Arbitrary degree-2 target: a length n*p^2 vector read entry by entry.

    Global index of (block i, pair (a, c)) is i*p^2 + a*p + c (row-major
    pairs); the decode is bit-exact and shared with the sampler.
    """

    def __init__(self, values, p: int):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size % (p * p) != 0:
            raise ValueError(f"target length {values.size} is not a multiple of p^2 = {p * p}")
        if not np.isfinite(values).all():
            raise ValueError("target must be finite")
        self.values = values
        self.p = p
        self.reads = 0

    @property
    def n(self) -> int:
        return self.values.size // (self.p * self.p)

    def point(self, i: int):
        raise TypeError("vector targets carry no series points; use a lifted-series target")

    def poly2_entry(self, block: int, a: int, c: int) -> float:
        self.reads += 1
        return float(self.values[block * self.p * self.p + a * self.p + c])


@dataclass
class KernelARProblem:
    """Order-d kernel autoregression instance.

    ``points`` holds the n+d-1 design-series points as rows (block i,
    0-based, has columns phi(points[i+d-1]), ..., phi(points[i]));
    ``target`` supplies the right-hand side blocks.
    """

    points: np.ndarray
    d: int
    kernel: DotProductKernel
    target: LiftedSeriesTarget | Poly2VectorTarget

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not np.isfinite(self.points).all():
            raise ValueError("series points must be finite")
        if self.d < 1:
            raise ValueError("order d must be >= 1")
        n = self.points.shape[0] - self.d + 1
        if n < 1:
            raise ValueError(f"series too short: need at least d = {self.d} points")
        if self.target.n != n:
            raise ValueError(f"target supplies {self.target.n} blocks; design has n = {n}")

    @property
    def n(self) -> int:
        return self.points.shape[0] - self.d + 1

    @property
    def p(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_series(cls, series, d: int, kernel: DotProductKernel | str) -> "KernelARProblem":
        """Autoregression form: design from points 1..N-1, targets points d+1..N."""
        series = np.atleast_2d(np.asarray(series, dtype=float))
        if isinstance(kernel, str):
            kernel = get_kernel(kernel)
        if series.shape[0] < d + 2:
            raise ValueError(f"series too short for order d = {d}")
        return cls(
            points=series[:-1],
            d=d,
            kernel=kernel,
            target=LiftedSeriesTarget(series[d:]),
        )

    def window_indices(self) -> np.ndarray:
        """(n, d) point indices: entry (i, l) is the series index of block i, column l."""
        n, d = self.n, self.d
        return np.arange(n)[:, None] + (d - 1) - np.arange(d)[None, :]

    def blocks(self) -> np.ndarray:
        """(n, p, d) dense block windows C^i (structural series reads)."""
        return self.points[self.window_indices()].transpose(0, 2, 1)


def band_pair_count(n: int, d: int) -> int:
    """Distinct banded pairs (s, s+delta), delta in [0, d-1], needed by the Gram matrix."""
    return n * d + d * (d - 1) // 2


@dataclass
class BandTable:
    """All banded inner products of a point series, each computed once.

    bands[delta][s] = <b_s, b_(s+delta)> for s in [0, L-1-delta], where L is
    the number of points. ``dot_count`` is the number of inner products
    evaluated (asserted against the closed-form pair count in tests).
    """

    d: int
    bands: list[np.ndarray]
    dot_count: int


def banded_inner_products(points, d: int) -> BandTable:
    """Inner products of all point pairs at distance < d, one pass per band."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    L = points.shape[0]
    if d < 1 or L < d:
        raise ValueError(f"need at least d = {d} points, got {L}")
    bands = []
    count = 0
    for delta in range(d):
        band = np.einsum("ik,ik->i", points[: L - delta], points[delta:])
        bands.append(band)
        count += band.size
    return BandTable(d=d, bands=bands, dot_count=count)


@dataclass
class KernelSolution:
    x: np.ndarray
    residual: float
    gram: np.ndarray
    gram_dot_count: int
    target_dot_count: int
    flags: tuple[str, ...] = ()

    @property
    def kernel_eval_count(self) -> int:
        return self.gram_dot_count + self.target_dot_count


def gram_via_bands(problem: KernelARProblem, table: BandTable | None = None) -> tuple[np.ndarray, int]:
    """d x d lifted Gram matrix: entry (j, j') = sum_i f(<b_(i+d-1-j), b_(i+d-1-j')>).

    Each of the 2d-1 diagonals rides one band of the table: apply f once per
    band value, prefix-sum, then every Gram entry is one subtraction.
    Returns (gram, dot_count).
    """
    n, d = problem.n, problem.d
    if table is None:
        table = banded_inner_products(problem.points, d)
    fbands = [np.concatenate([[0.0], np.cumsum(problem.kernel(band))]) for band in table.bands]
    gram = np.empty((d, d))
    for j in range(d):
        for jp in range(j, d):
            cs = fbands[jp - j]
            start = d - 1 - jp
            gram[j, jp] = gram[jp, j] = cs[start + n] - cs[start]
    return gram, table.dot_count


def general_kernel_solve(problem: KernelARProblem, params: Params = DEFAULTS) -> KernelSolution:
    """Normal-equations solve x = Gram^+ (phi(A)^T b) for lifted-series targets.

    Everything runs through kernel evaluations: the Gram matrix from the band
    table, the right-hand side from the n*d design-target inner products, and
    the reported residual from
        ||phi(A)x - b||^2 = x^T Gram x - 2 x^T rhs + sum_i f(<q_i, q_i>).
    """
    if not isinstance(problem.target, LiftedSeriesTarget):
        raise TypeError("general kernel solve needs a lifted-series target")
    n, d = problem.n, problem.d
    q = problem.target.points
    gram, gram_dots = gram_via_bands(problem)
    windows = problem.points[problem.window_indices()]  # (n, d, p)
    dots = np.einsum("idk,ik->id", windows, q)
    rhs = problem.kernel(dots).sum(axis=0)
    target_dots = dots.size + n

    u, s, vt = np.linalg.svd(gram)
    flags: tuple[str, ...] = ()
    if s.size and s[0] > 0:
        keep = s > s[0] * d * params.pinv_rcond_factor
        if not keep.all():
            flags = ("rank-deficient",)
        inv = (vt[keep].T / s[keep]) @ u[:, keep].T
    else:
        inv = np.zeros((d, d))
        flags = ("zero-gram",)
    x = inv @ rhs
    target_sq = float(np.sum(problem.kernel(np.einsum("ik,ik->i", q, q))))
    residual_sq = float(x @ gram @ x - 2.0 * x @ rhs + target_sq)
    residual = float(np.sqrt(max(residual_sq, 0.0)))
    return KernelSolution(
        x=x,
        residual=residual,
        gram=gram,
        gram_dot_count=gram_dots,
        target_dot_count=target_dots,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Degree-2 polynomial kernel: explicit-lift sampler.


@dataclass
class Poly2RowSample:
    """One sampled row of the degree-2 lift: block i, pair (a, c).

    ``probability`` is the exact chance the sampler had of emitting this row,
    mixed over all sketch columns; ``global_index`` locates the matching
    target entry.
    """

    block: int
    a: int
    c: int
    probability: float
    p: int

    @property
    def global_index(self) -> int:
        return self.block * self.p * self.p + self.a * self.p + self.c


@dataclass
class Poly2Sampler:
    """Frozen sampling state for rows of the degree-2 lifted design."""

    problem: KernelARProblem
    blocks: np.ndarray  # (n, p, d) dense windows
    R: np.ndarray  # d x d change of basis, lift * R approximately orthonormal
    V: np.ndarray  # d x t_G sketch directions (R times Gaussian)
    ell: np.ndarray  # (n, t_G) median block-norm estimates ||B^i v_j||^2
    gammas: np.ndarray  # (t_G,) per-column totals, sum of ell
    block_cumsums: np.ndarray  # (n, t_G) running sums of ell down the blocks
    gamma_cumsum: np.ndarray  # (t_G,)
    colnorm_est: np.ndarray  # (n, t_G, p) in-block column-norm estimates
    sketch_passes: int
    flags: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.ell.shape[0]

    @property
    def p(self) -> int:
        return self.blocks.shape[1]

    @property
    def d(self) -> int:
        return self.blocks.shape[2]

    def row_of_lift(self, block: int, a: int, c: int) -> np.ndarray:
        """Exact dense row (block, (a, c)) of the lift: entries C^i[a, l] * C^i[c, l]."""
        return self.blocks[block, a, :] * self.blocks[block, c, :]


def build_poly2_sampler(
    problem: KernelARProblem, rng, params: Params = DEFAULTS
) -> Poly2Sampler:
    """Precompute the degree-2 row-sampling state.

    Steps: (1) sketch the lift with per-block independent TensorSketches into
    a shared bucket space and take R = inverse triangular factor of the QR,
    so the columns of lift * R are near-orthonormal; (2) estimate
    ||B^i (R g_j)||^2 for Gaussian g_j by median-boosted TensorSketch
    repetitions, reusing one sketched image of the series per repetition
    across all block windows; (3) estimate every in-block column norm of
    C^i D_v (C^i)^T through one shared Gaussian sketch. Everything later
    needed for exact mixture probabilities is tabulated here.
    """
    if problem.kernel.name != "poly2":
        raise ValueError(f"degree-2 sampler needs the poly2 kernel, got {problem.kernel.name!r}")
    rng = as_rng(rng)
    n, d, p = problem.n, problem.d, problem.p
    blocks = problem.blocks()
    flags: tuple[str, ...] = ()

    # Subspace-embedding sketch of the lift and the change of basis R.
    m_embed = int(max(params.c_sketch_rows * d * d, params.m_sketch_min))
    W = np.zeros((m_embed, d))
    for i in range(n):
        ts = TensorSketch.draw(m_embed, p, rng)
        W += ts.apply_lift_columns(blocks[i])
    _, R_tri = np.linalg.qr(W)
    diag = np.abs(np.diag(R_tri))
    tol = (diag.max() if diag.size else 0.0) * d * 1e-12
    if diag.max() == 0.0:
        raise ValueError("zero design: the lifted matrix has no mass to sample")
    if (diag <= tol).any():
        # Rank-deficient embedding image: nudge the tiny pivots so the
        # triangular solve stays finite, and say so.
        fix = np.where(np.abs(np.diag(R_tri)) <= tol, tol, 0.0)
        R_tri = R_tri + np.diag(fix)
        flags = flags + ("embedding-regularized",)
    R = np.linalg.solve(R_tri, np.eye(d))

    t_g = int(params.c_gaussian) * ceil_log2(max(n, 2))
    V = R @ rng.standard_normal((d, t_g))

    # Median-boosted block-norm estimates, one sketched series image per rep.
    reps = int(params.c_median_reps) * ceil_log2(max(n, 2))
    if reps % 2 == 0:
        reps += 1
    idx = problem.window_indices()
    estimates = np.empty((reps, n, t_g))
    for r in range(reps):
        ts = TensorSketch.draw(int(params.m_block_norm), p, rng)
        imgs = ts.apply_lift_columns(problem.points.T)  # (m, L)
        gathered = imgs[:, idx]  # (m, n, d)
        sketched = np.einsum("mnd,dj->mnj", gathered, V)
        estimates[r] = np.sum(sketched**2, axis=0)
    ell = np.median(estimates, axis=0)
    gammas = ell.sum(axis=0)
    if not gammas.any():
        flags = flags + ("zero-sketch-mass",)

    # In-block column-norm estimates of C^i D_v (C^i)^T, one shared Gaussian.
    t_h = int(params.c_block_gaussian) * ceil_log2(max(n, 2))
    H = GaussianSketch.draw(t_h, p, rng)
    HC = np.einsum("hp,npd->nhd", H.matrix, blocks)
    colnorm = np.empty((n, t_g, p))
    for j in range(t_g):
        M = np.einsum("nhd,npd->nhp", HC * V[None, None, :, j], blocks)
        colnorm[:, j, :] = np.sum(M**2, axis=1) / t_h

    return Poly2Sampler(
        problem=problem,
        blocks=blocks,
        R=R,
        V=V,
        ell=ell,
        gammas=gammas,
        block_cumsums=np.cumsum(ell, axis=0),
        gamma_cumsum=np.cumsum(gammas),
        colnorm_est=colnorm,
        sketch_passes=1 + reps,
        flags=flags,
    )


def _draw_from_cumsum(cum: np.ndarray, rng) -> int:
    total = cum[-1]
    return int(np.minimum(np.searchsorted(cum, rng.random() * total, side="right"), cum.size - 1))


def sample_poly2_row(state: Poly2Sampler, rng, max_retries: int = 64) -> Poly2RowSample:
    """Draw one row of the lift roughly proportional to ||e_row lift R||^2.

    The draw walks sketch column -> block -> matrix column -> entry; the
    returned probability is the exact mixture over every sketch column of the
    path probabilities, which is what the row actually had. Degenerate
    zero-mass branches are resampled (bounded retries).
    """
    rng = as_rng(rng)
    if state.gamma_cumsum[-1] <= 0:
        raise ValueError("sampler has no mass: all block-norm estimates are zero")
    for _ in range(max_retries):
        j = _draw_from_cumsum(state.gamma_cumsum, rng)
        i = _draw_from_cumsum(state.block_cumsums[:, j], rng)
        col_w = state.colnorm_est[i, j]
        if col_w.sum() <= 0:
            continue
        c = _draw_from_cumsum(np.cumsum(col_w), rng)
        # Exact columns of C^i D_(v_j) (C^i)^T for every sketch column at once.
        cols = state.blocks[i] @ (state.V * state.blocks[i][c][:, None])  # (p, t_G)
        sq = cols**2
        col_mass = sq.sum(axis=0)
        if col_mass[j] <= 0:
            continue
        a = _draw_from_cumsum(np.cumsum(sq[:, j]), rng)

        total = state.gamma_cumsum[-1]
        col_tot = state.colnorm_est[i].sum(axis=1)  # (t_G,)
        with np.errstate(invalid="ignore", divide="ignore"):
            term = (
                (state.ell[i] / total)
                * np.where(col_tot > 0, state.colnorm_est[i, :, c] / col_tot, 0.0)
                * np.where(col_mass > 0, sq[a] / col_mass, 0.0)
            )
        prob = float(term.sum())
        return Poly2RowSample(block=i, a=a, c=c, probability=prob, p=state.p)
    raise RuntimeError("row sampling kept hitting zero-mass branches; the design is degenerate")


@dataclass
class Poly2Solution:
    """Sampled degree-2 regression result.

    ``sampled_residual`` is the in-sample estimate of ||lift x - b||; the
    exact residual needs the full target and is left to reporting layers.
    ``b_reads`` counts target entries touched (at most the sample size per
    repetition).
    """

    x: np.ndarray
    sampled_residual: float
    samples_used: int
    b_reads: int
    repetitions_used: int
    flags: tuple[str, ...] = ()


def poly2_sample_size(d: int, eps: float, params: Params = DEFAULTS) -> int:
    return int(np.ceil(params.c_poly2_sample * (d * np.log(max(d, 2)) + d / eps)))


def solve_poly2(
    problem: KernelARProblem,
    eps: float,
    rng,
    repetitions: int = 1,
    state: Poly2Sampler | None = None,
    params: Params = DEFAULTS,
) -> Poly2Solution:
    """Degree-2 kernel autoregression reading at most s target entries per repetition.

    s = ceil(c_poly2_sample * (d ln d + d / eps)) rows are sampled from the
    lift, rescaled by 1/sqrt(s * probability), and solved by dense least
    squares in the sampled space. With repetitions > 1 an extra shared
    validation sample scores the candidates and the smallest estimated true
    cost wins.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    rng = as_rng(rng)
    if state is None:
        state = build_poly2_sampler(problem, rng, params)
    s = poly2_sample_size(problem.d, eps, params)
    start_reads = problem.target.reads
    repetitions = max(1, repetitions)

    candidates = []
    flags = state.flags
    for _ in range(repetitions):
        rows = np.empty((s, problem.d))
        rhs = np.empty(s)
        scales = np.empty(s)
        for t in range(s):
            smp = sample_poly2_row(state, rng)
            rows[t] = state.row_of_lift(smp.block, smp.a, smp.c)
            rhs[t] = problem.target.poly2_entry(smp.block, smp.a, smp.c)
            scales[t] = 1.0 / np.sqrt(s * smp.probability)
        rows *= scales[:, None]
        rhs = rhs * scales
        x, _, rank, _ = np.linalg.lstsq(rows, rhs, rcond=None)
        rep_flags = ("rank-deficient",) if rank < problem.d else ()
        resid = float(np.linalg.norm(rows @ x - rhs))
        candidates.append((x, resid, rep_flags))

    if len(candidates) == 1:
        x, resid, rep_flags = candidates[0]
    else:
        # Shared validation sample: unbiased estimate of each candidate's cost.
        v_rows = np.empty((s, problem.d))
        v_rhs = np.empty(s)
        v_scales = np.empty(s)
        for t in range(s):
            smp = sample_poly2_row(state, rng)
            v_rows[t] = state.row_of_lift(smp.block, smp.a, smp.c)
            v_rhs[t] = problem.target.poly2_entry(smp.block, smp.a, smp.c)
            v_scales[t] = 1.0 / np.sqrt(s * smp.probability)
        v_rows *= v_scales[:, None]
        v_rhs = v_rhs * v_scales
        scored = [
            (float(np.linalg.norm(v_rows @ x - v_rhs)), k)
            for k, (x, _, _) in enumerate(candidates)
        ]
        _, k = min(scored)
        x, resid, rep_flags = candidates[k]

    return Poly2Solution(
        x=x,
        sampled_residual=resid,
        samples_used=s,
        b_reads=problem.target.reads - start_reads,
        repetitions_used=repetitions,
        flags=tuple(dict.fromkeys(flags + rep_flags)),
    )
