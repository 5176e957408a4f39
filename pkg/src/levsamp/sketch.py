"""Randomized sketches: CountSketch, degree-2 TensorSketch, Gaussian maps.

All sketches are frozen once drawn: construction consumes a seed (or
Generator) and stores the hash/sign arrays or the dense Gaussian, so repeated
applications are deterministic and cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import as_rng


@dataclass(frozen=True, eq=False)
class CountSketch:
    """Sketch R^n -> R^m: out[k] = sum over h(i)=k of s(i) * x_i.

    ``h`` maps each input index to a bucket, ``s`` carries the random signs.
    At the sizes this library targets the hashes are fully independent draws.
    """

    m: int
    n: int
    h: np.ndarray
    s: np.ndarray

    @classmethod
    def draw(cls, m: int, n: int, rng) -> "CountSketch":
        if m < 1 or n < 1:
            raise ValueError("CountSketch needs positive dimensions")
        rng = as_rng(rng)
        h = rng.integers(0, m, size=n)
        s = rng.integers(0, 2, size=n) * 2.0 - 1.0
        return cls(m=m, n=n, h=h, s=s)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"CountSketch.apply expects shape ({self.n},), got {x.shape}")
        out = np.zeros(self.m)
        nz = np.flatnonzero(x)
        if nz.size:
            np.add.at(out, self.h[nz], self.s[nz] * x[nz])
        return out

    def apply_columns(self, X) -> np.ndarray:
        """Sketch every column of an (n, k) array at once."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ValueError(f"CountSketch.apply_columns expects ({self.n}, k), got {X.shape}")
        out = np.zeros((self.m, X.shape[1]))
        np.add.at(out, self.h, self.s[:, None] * X)
        return out

    def matrix(self) -> np.ndarray:
        """Dense m x n sketch matrix (tests only)."""
        S = np.zeros((self.m, self.n))
        S[self.h, np.arange(self.n)] = self.s
        return S


@dataclass(frozen=True, eq=False)
class TensorSketch:
    """Degree-2 TensorSketch over R^(p*p), applied to lifts u (x) u.

    Equivalent to a CountSketch on the flattened outer product with derived
    hash (h1[a] + h2[c]) mod m and sign s1[a] * s2[c]; the FFT identity
    computes it from the two first-order CountSketch images in
    O(p + m log m) per vector.
    """

    m: int
    p: int
    cs1: CountSketch
    cs2: CountSketch
    _twiddle: np.ndarray = field(repr=False, default=None)

    @classmethod
    def draw(cls, m: int, p: int, rng) -> "TensorSketch":
        rng = as_rng(rng)
        cs1 = CountSketch.draw(m, p, rng)
        cs2 = CountSketch.draw(m, p, rng)
        return cls(m=m, p=p, cs1=cs1, cs2=cs2)

    def apply_lift(self, u) -> np.ndarray:
        """Sketch of u (x) u for a single vector u in R^p."""
        return self.apply_lift_columns(np.asarray(u, dtype=float)[:, None])[:, 0]

    def apply_lift_columns(self, U) -> np.ndarray:
        """Sketches of u_j (x) u_j for every column u_j of a (p, k) array."""
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.shape[0] != self.p:
            raise ValueError(f"apply_lift_columns expects ({self.p}, k), got {U.shape}")
        f1 = np.fft.rfft(self.cs1.apply_columns(U), axis=0)
        f2 = np.fft.rfft(self.cs2.apply_columns(U), axis=0)
        return np.fft.irfft(f1 * f2, self.m, axis=0)

    def derived_hash_sign(self) -> tuple[np.ndarray, np.ndarray]:
        """Hash/sign arrays of the equivalent CountSketch over row-major pairs (a, c)."""
        h = (self.cs1.h[:, None] + self.cs2.h[None, :]) % self.m
        s = self.cs1.s[:, None] * self.cs2.s[None, :]
        return h.reshape(-1), s.reshape(-1)

    def derived_matrix(self) -> np.ndarray:
        """Dense m x p^2 matrix of the derived CountSketch (tests only)."""
        h, s = self.derived_hash_sign()
        S = np.zeros((self.m, self.p * self.p))
        S[h, np.arange(self.p * self.p)] = s
        return S


@dataclass(frozen=True, eq=False)
class GaussianSketch:
    """Dense m x n map with i.i.d. standard normal entries.

    ``estimate_sq_norm`` divides squared image norms by m, so the estimator
    is unbiased for squared Euclidean norms.
    """

    m: int
    n: int
    matrix: np.ndarray

    @classmethod
    def draw(cls, m: int, n: int, rng) -> "GaussianSketch":
        if m < 1 or n < 1:
            raise ValueError("GaussianSketch needs positive dimensions")
        rng = as_rng(rng)
        return cls(m=m, n=n, matrix=rng.standard_normal((m, n)))

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"GaussianSketch.apply expects shape ({self.n},), got {x.shape}")
        return self.matrix @ x

    def estimate_sq_norm(self, x) -> float:
        return float(np.sum(self.apply(x) ** 2) / self.m)

    def estimate_col_sq_norms(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ValueError(f"estimate_col_sq_norms expects ({self.n}, k), got {X.shape}")
        return np.sum((self.matrix @ X) ** 2, axis=0) / self.m


def median_norm_estimate(values) -> float:
    """Median of independent norm estimates (the boosting combiner)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("median_norm_estimate needs at least one estimate")
    return float(np.median(values))
