"""Small shared helpers: RNG normalization and integer utilities."""
from __future__ import annotations

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Return a numpy Generator from a seed, passing Generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def next_pow2(m: int) -> int:
    """Smallest power of two >= m (m >= 1)."""
    if m < 1:
        raise ValueError("next_pow2 needs m >= 1")
    return 1 << (int(m) - 1).bit_length()


def ceil_log2(n: int) -> int:
    """ceil(log2(n)) for n >= 1, with ceil_log2(1) = 1 so log-sized sketches never degenerate."""
    if n < 1:
        raise ValueError("ceil_log2 needs n >= 1")
    return max(1, int(np.ceil(np.log2(n))))
