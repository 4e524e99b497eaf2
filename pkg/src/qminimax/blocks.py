"""Weakly geometric system of blocks over the coordinates 1..N."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sequence_model import sample_size

# Absorbs representation error in log(1/eps) so that e.g. eps = exp(-5)
# gives T_1 = 5 rather than 6.
_SNAP = 1e-9


@dataclass(frozen=True)
class BlockSystem:
    epsilon: float
    N: int
    rho: float
    sizes: tuple[int, ...]
    starts: tuple[int, ...]  # 1-based first index of each block

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def T1(self) -> int:
        return self.sizes[0]

    def slices(self):
        """0-based python slices for every block."""
        return [slice(j - 1, j - 1 + t) for j, t in zip(self.starts, self.sizes)]

    def max_ratio(self) -> float:
        """max_{k <= K-1} T_{k+1} / T_k (1.0 for a single block)."""
        if self.K < 2:
            return 1.0
        s = np.asarray(self.sizes, dtype=float)
        return float(np.max(s[1:] / s[:-1]))


@lru_cache(maxsize=64)
def build_blocks(epsilon: float) -> BlockSystem:
    """Partition {1..floor(1/eps^2)} into weakly geometric blocks.

    T_1 = ceil(log(1/eps)), T_k = floor(T_1 (1+rho)^(k-1)) with
    rho = 1/log(1/eps); the last block takes whatever remains, and may be
    smaller than its predecessor.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    N = sample_size(epsilon)
    if N < 1:
        raise ValueError(f"epsilon={epsilon} leaves no coordinates to estimate")
    log_inv = math.log(1.0 / epsilon)
    rho = 1.0 / log_inv
    T1 = max(1, math.ceil(log_inv - _SNAP))

    sizes: list[int] = []
    used = 0
    k = 1
    while used < N:
        t = T1 if k == 1 else math.floor(T1 * (1.0 + rho) ** (k - 1) + _SNAP)
        t = min(t, N - used)
        sizes.append(t)
        used += t
        k += 1

    starts = tuple(int(s) for s in np.cumsum([1] + sizes[:-1]))
    return BlockSystem(float(epsilon), N, rho, tuple(sizes), starts)


def block_slice(x, k: int, blocks: BlockSystem) -> np.ndarray:
    """Entries of ``x`` belonging to block ``k`` (1-based)."""
    if not 1 <= k <= blocks.K:
        raise IndexError(f"block index {k} outside 1..{blocks.K}")
    x = np.asarray(x)
    j, t = blocks.starts[k - 1], blocks.sizes[k - 1]
    if x.shape[0] < j - 1 + t:
        raise ValueError(f"sequence of length {x.shape[0]} is too short for block {k}")
    return x[j - 1 : j - 1 + t]
