"""Structured linear operators accessed only through matrix-vector products.

Every operator is a linear map R^d -> R^n exposed through ``apply`` (forward
matvec) and ``apply_transpose`` (adjoint matvec). A monotone ``matvec_count``
records how many of those calls the operator has served; all cost accounting
in the samplers is phrased in this currency. Row/column reads (``row``,
``col``) are structural accesses, not matvecs: concrete operators override
them with O(d) / O(n) reads where the structure allows it, and the generic
fallback routes through a counted matvec so exotic operators cannot
under-report work.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .util import next_pow2

# Active materialization logs (test hook). Each entry is (rows, cols) of a
# dense block read out of an operator.
_MATERIALIZATION_LOGS: list[list[tuple[int, int]]] = []


@contextmanager
def log_materializations():
    """Collect (rows, cols) of every dense block materialized inside the body."""
    log: list[tuple[int, int]] = []
    _MATERIALIZATION_LOGS.append(log)
    try:
        yield log
    finally:
        _MATERIALIZATION_LOGS.remove(log)


def _record_materialization(rows: int, cols: int) -> None:
    for log in _MATERIALIZATION_LOGS:
        log.append((rows, cols))


class LinearOperator:
    """Base class: linear map R^d -> R^n with counted matvec access.

    Subclasses implement ``_apply`` / ``_apply_transpose`` on validated float
    vectors. The public wrappers check dimensions and bump ``matvec_count``
    exactly once per call. Counters are plain ints updated under the GIL;
    they are exact for single-threaded use and monotone always.
    """

    def __init__(self, n: int, d: int):
        if n < 1 or d < 1:
            raise ValueError(f"operator shape must be positive, got ({n}, {d})")
        self.n = int(n)
        self.d = int(d)
        self.matvec_count = 0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.d)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"apply expects shape ({self.d},), got {x.shape}")
        self.matvec_count += 1
        return self._apply(x)

    def apply_transpose(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise ValueError(f"apply_transpose expects shape ({self.n},), got {y.shape}")
        self.matvec_count += 1
        return self._apply_transpose(y)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _apply_transpose(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def row(self, i: int) -> np.ndarray:
        """Dense row i. Generic fallback costs one counted adjoint matvec."""
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} out of range [0, {self.n})")
        e = np.zeros(self.n)
        e[i] = 1.0
        return self.apply_transpose(e)

    def col(self, j: int) -> np.ndarray:
        """Dense column j. Generic fallback costs one counted matvec."""
        if not 0 <= j < self.d:
            raise IndexError(f"column index {j} out of range [0, {self.d})")
        e = np.zeros(self.d)
        e[j] = 1.0
        return self.apply(e)

    def __repr__(self) -> str:  # pragma: no cover
        return f"{type(self).__name__}(n={self.n}, d={self.d})"


def circulant_multiply(c, x) -> np.ndarray:
    """Multiply the circulant matrix C[i][j] = c[(i-j) mod m] by x.

    Uses an FFT circular convolution; when m is not a power of two the inputs
    are zero-padded to the next power of two at least 2m-1 and the linear
    convolution is folded back. Max elementwise error stays within
    1e-10 * m * max|c| * max|x|.
    """
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    if c.ndim != 1 or x.ndim != 1 or c.shape != x.shape:
        raise ValueError(f"circulant_multiply needs equal-length vectors, got {c.shape} and {x.shape}")
    if not (np.isfinite(c).all() and np.isfinite(x).all()):
        raise ValueError("circulant_multiply requires finite inputs")
    m = c.shape[0]
    if m & (m - 1) == 0:
        return np.fft.irfft(np.fft.rfft(c) * np.fft.rfft(x), m)
    size = next_pow2(2 * m - 1)
    conv = np.fft.irfft(np.fft.rfft(c, size) * np.fft.rfft(x, size), size)
    out = conv[:m].copy()
    out[: m - 1] += conv[m : 2 * m - 1]
    return out


def _toeplitz_embedding(gen: np.ndarray, rows: int, cols: int) -> np.ndarray:
    # First column of a size-m circulant whose top-left rows x cols block is
    # the Toeplitz matrix A[i][j] = gen[i - j + cols - 1]; needs m >= rows+cols-1.
    m = next_pow2(rows + cols - 1)
    c = np.zeros(m)
    c[:rows] = gen[cols - 1 :]
    if cols > 1:
        c[m - cols + 1 :] = gen[: cols - 1]
    return c


class ToeplitzOperator(LinearOperator):
    """n x d Toeplitz matrix A[i][j] = g[(i - j) + (d - 1)], len(g) = n + d - 1.

    Row i reads (g[i+d-1], ..., g[i]). Matvecs run through one circulant
    embedding of size next_pow2(n + d - 1); the adjoint uses the embedding of
    the reversed generating sequence. Both spectra are cached at construction.
    """

    def __init__(self, n: int, d: int, g):
        super().__init__(n, d)
        g = np.asarray(g, dtype=float)
        if g.shape != (n + d - 1,):
            raise ValueError(f"generating sequence must have length n+d-1 = {n + d - 1}, got {g.shape}")
        if not np.isfinite(g).all():
            raise ValueError("generating sequence must be finite")
        self.g = g
        self._m = next_pow2(n + d - 1)
        self._spectrum = np.fft.rfft(_toeplitz_embedding(g, n, d))
        self._spectrum_t = np.fft.rfft(_toeplitz_embedding(g[::-1], d, n))

    def _apply(self, x: np.ndarray) -> np.ndarray:
        xp = np.zeros(self._m)
        xp[: self.d] = x
        return np.fft.irfft(np.fft.rfft(xp) * self._spectrum, self._m)[: self.n]

    def _apply_transpose(self, y: np.ndarray) -> np.ndarray:
        yp = np.zeros(self._m)
        yp[: self.n] = y
        return np.fft.irfft(np.fft.rfft(yp) * self._spectrum_t, self._m)[: self.d]

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} out of range [0, {self.n})")
        return self.g[i : i + self.d][::-1].copy()

    def col(self, j: int) -> np.ndarray:
        if not 0 <= j < self.d:
            raise IndexError(f"column index {j} out of range [0, {self.d})")
        start = self.d - 1 - j
        return self.g[start : start + self.n].copy()


class DenseOperator(LinearOperator):
    """Wrapper around an explicit dense matrix (tests, CLI input, base cases)."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("DenseOperator needs a 2-d array")
        if not np.isfinite(matrix).all():
            raise ValueError("DenseOperator matrix must be finite")
        super().__init__(matrix.shape[0], matrix.shape[1])
        self.matrix = matrix

    def _apply(self, x):
        return self.matrix @ x

    def _apply_transpose(self, y):
        return self.matrix.T @ y

    def row(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} out of range [0, {self.n})")
        return self.matrix[i].copy()

    def col(self, j):
        if not 0 <= j < self.d:
            raise IndexError(f"column index {j} out of range [0, {self.d})")
        return self.matrix[:, j].copy()


class DiagonalOperator(LinearOperator):
    """Square diagonal scaling."""

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=float)
        if entries.ndim != 1:
            raise ValueError("DiagonalOperator needs a vector of diagonal entries")
        if not np.isfinite(entries).all():
            raise ValueError("diagonal entries must be finite")
        super().__init__(entries.shape[0], entries.shape[0])
        self.entries = entries

    @classmethod
    def geometric(cls, h: float, d: int) -> "DiagonalOperator":
        """diag(1, 1/h, ..., 1/h^(d-1)); rejects h values whose powers overflow."""
        if h == 0:
            raise ValueError("step size h must be nonzero")
        with np.errstate(over="ignore", divide="ignore"):
            entries = float(h) ** (-np.arange(d, dtype=float))
        if not np.isfinite(entries).all():
            raise ValueError(
                f"step size h={h} overflows the diagonal scaling: |h^-(d-1)| = |h|^-{d - 1} "
                f"exceeds the float range"
            )
        return cls(entries)

    def _apply(self, x):
        return self.entries * x

    def _apply_transpose(self, y):
        return self.entries * y

    def row(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} out of range [0, {self.n})")
        out = np.zeros(self.d)
        out[i] = self.entries[i]
        return out

    def col(self, j):
        return self.row(j)


class DifferenceOperator(LinearOperator):
    """d x d successive-difference map x -> (x_2 - x_1, ..., x_d - x_{d-1}, 0)."""

    def __init__(self, d: int):
        super().__init__(d, d)

    def _apply(self, x):
        out = np.zeros(self.d)
        if self.d > 1:
            out[: self.d - 1] = x[1:] - x[:-1]
        return out

    def _apply_transpose(self, y):
        out = np.zeros(self.d)
        if self.d == 1:
            return out
        out[0] = -y[0]
        out[1 : self.d - 1] = y[: self.d - 2] - y[1 : self.d - 1]
        out[self.d - 1] = y[self.d - 2]
        return out

    def row(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} out of range [0, {self.n})")
        out = np.zeros(self.d)
        if i < self.d - 1:
            out[i] = -1.0
            out[i + 1] = 1.0
        return out

    def col(self, j):
        if not 0 <= j < self.d:
            raise IndexError(f"column index {j} out of range [0, {self.d})")
        out = np.zeros(self.d)
        if j < self.d - 1:
            out[j] = -1.0
        if j > 0:
            out[j - 1] = 1.0
        return out


class ComposedOperator(LinearOperator):
    """Product of factors, rightmost applied first: apply(x) = F1(F2(...Fk(x)))."""

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise ValueError("compose needs at least one factor")
        for left, right in zip(factors, factors[1:]):
            if left.d != right.n:
                raise ValueError(
                    f"factor shapes do not chain: ({left.n},{left.d}) then ({right.n},{right.d})"
                )
        super().__init__(factors[0].n, factors[-1].d)
        self.factors = factors

    def _apply(self, x):
        for f in reversed(self.factors):
            x = f.apply(x)
        return x

    def _apply_transpose(self, y):
        for f in self.factors:
            y = f.apply_transpose(y)
        return y

    def row(self, i):
        v = self.factors[0].row(i)
        for f in self.factors[1:]:
            v = f.apply_transpose(v)
        return v

    def col(self, j):
        v = self.factors[-1].col(j)
        for f in reversed(self.factors[:-1]):
            v = f.apply(v)
        return v


def compose(*factors) -> ComposedOperator:
    if len(factors) == 1 and not isinstance(factors[0], LinearOperator):
        factors = tuple(factors[0])
    return ComposedOperator(factors)


class RowSubsetOperator(LinearOperator):
    """Row restriction of a parent operator; pure index bookkeeping.

    Applies route through the parent (the parent's matvec cost does not shrink
    when rows are dropped), so parent counters keep charging full matvecs.
    """

    def __init__(self, parent: LinearOperator, indices):
        indices = np.asarray(indices, dtype=int)
        if indices.ndim != 1 or indices.size == 0:
            raise ValueError("row subset needs a nonempty 1-d index array")
        if indices.min() < 0 or indices.max() >= parent.n:
            raise ValueError("row subset index out of range")
        super().__init__(indices.size, parent.d)
        self.parent = parent
        self.indices = indices

    def _apply(self, x):
        return self.parent.apply(x)[self.indices]

    def _apply_transpose(self, y):
        z = np.zeros(self.parent.n)
        np.add.at(z, self.indices, y)
        return self.parent.apply_transpose(z)

    def row(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"row index {i} out of range [0, {self.n})")
        return self.parent.row(int(self.indices[i]))

    def col(self, j):
        return self.parent.col(j)[self.indices]


class ColumnSubsetOperator(LinearOperator):
    """Column restriction of a parent operator; index bookkeeping only."""

    def __init__(self, parent: LinearOperator, indices):
        indices = np.asarray(indices, dtype=int)
        if indices.ndim != 1 or indices.size == 0:
            raise ValueError("column subset needs a nonempty 1-d index array")
        if indices.min() < 0 or indices.max() >= parent.d:
            raise ValueError("column subset index out of range")
        super().__init__(parent.n, indices.size)
        self.parent = parent
        self.indices = indices

    def _apply(self, x):
        z = np.zeros(self.parent.d)
        np.add.at(z, self.indices, x)
        return self.parent.apply(z)

    def _apply_transpose(self, y):
        return self.parent.apply_transpose(y)[self.indices]

    def row(self, i):
        return self.parent.row(i)[self.indices]

    def col(self, j):
        if not 0 <= j < self.d:
            raise IndexError(f"column index {j} out of range [0, {self.d})")
        return self.parent.col(int(self.indices[j]))


class AugmentedOperator(LinearOperator):
    """[A | b]: the operator with the target vector appended as a last column."""

    def __init__(self, A: LinearOperator, b):
        b = np.asarray(b, dtype=float)
        if b.shape != (A.n,):
            raise ValueError(f"target must have shape ({A.n},), got {b.shape}")
        if not np.isfinite(b).all():
            raise ValueError("target vector must be finite")
        super().__init__(A.n, A.d + 1)
        self.A = A
        self.b = b

    def _apply(self, x):
        return self.A.apply(x[:-1]) + x[-1] * self.b

    def _apply_transpose(self, y):
        out = np.empty(self.d)
        out[:-1] = self.A.apply_transpose(y)
        out[-1] = self.b @ y
        return out

    def row(self, i):
        out = np.empty(self.d)
        out[:-1] = self.A.row(i)
        out[-1] = self.b[i]
        return out

    def col(self, j):
        if j == self.d - 1:
            return self.b.copy()
        return self.A.col(j)


def ar_design_operator(series, d: int, allow_underdetermined: bool = False) -> ToeplitzOperator:
    """Autoregression design matrix as a Toeplitz operator.

    The series holds all n+d observations of the fitting window; the final
    one is target-only and never enters the design. Row i (0-based) of the
    n x d design is (series[i+d-1], ..., series[i]): the d lags preceding
    observation i+d. n = len(series) - d.

    Parameters
    ----------
    series : 1-d array of at least d+1 observations.
    d : model order.
    allow_underdetermined : permit d >= n designs (rejected by default since
        the downstream solvers expect overconstrained systems).
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not np.isfinite(series).all():
        raise ValueError("series must be finite")
    if d < 1:
        raise ValueError("model order d must be >= 1")
    if series.size < d + 1:
        raise ValueError(
            f"series too short: need at least d + 1 = {d + 1} observations, got {series.size}"
        )
    n = series.size - d
    if d >= n and not allow_underdetermined:
        raise ValueError(
            f"model order d = {d} leaves only n = {n} design rows; pass "
            f"allow_underdetermined=True to build it anyway"
        )
    return ToeplitzOperator(n, d, series[:-1])


def dynamical_design_operator(
    series, d: int, h: float, use_difference: bool = True
) -> ComposedOperator:
    """Design operator for finite-difference dynamical fitting: T * U * D.

    T is the autoregression Toeplitz design, U the successive-difference map,
    and D = diag(1, 1/h, ..., 1/h^(d-1)) the step-size scaling. With
    use_difference=False the difference factor is dropped (then h=1 reduces
    the operator to the plain autoregression design).
    """
    T = ar_design_operator(series, d)
    factors: list[LinearOperator] = [T]
    if use_difference:
        factors.append(DifferenceOperator(d))
    factors.append(DiagonalOperator.geometric(h, d))
    return ComposedOperator(factors)


def dense_rows(op: LinearOperator, indices=None) -> np.ndarray:
    """Materialize the given rows (all rows if None) of an operator densely.

    Structural row reads where available; otherwise one counted adjoint matvec
    per row. Every call lands in the active materialization logs.
    """
    if indices is None:
        indices = np.arange(op.n)
    else:
        indices = np.asarray(indices, dtype=int)
    out = np.empty((indices.size, op.d))
    for k, i in enumerate(indices):
        out[k] = op.row(int(i))
    _record_materialization(indices.size, op.d)
    return out
