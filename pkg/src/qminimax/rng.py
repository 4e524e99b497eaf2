"""Counter-based random streams.

Everything random in the package is derived from Philox keys, so any
stream can be regenerated from its integer coordinates alone.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def derive_seed(*parts: int) -> int:
    """Hash integer coordinates into a single 64-bit seed."""
    words = [int(p) & _MASK64 for p in parts]
    state = np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)
    return int(state[0])


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def _column_stream(seed: int, column: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words ``start .. start+count-1`` of column ``column``."""
    block, skip = divmod(start, 4)
    bitgen = np.random.Philox(
        key=np.array([int(seed) & _MASK64, column], dtype=np.uint64),
        counter=np.array([block, 0, 0, 0], dtype=np.uint64),
    )
    return bitgen.random_raw(count + skip)[skip:]


def gaussian_rows(seed: int, start: int, count: int, length: int) -> np.ndarray:
    """Rows ``start .. start+count-1`` of an infinite N(0, 1) matrix, first ``length`` columns.

    Entry (i, j) depends only on (seed, i, j): column j is its own Philox
    stream and row i is its i-th word, mapped to a normal through the inverse
    CDF. Truncating rows to a shorter length therefore gives a prefix of the
    longer row, which is what the per-block codebooks need.
    """
    out = np.empty((count, length))
    for j in range(length):
        words = _column_stream(seed, j, start, count)
        # 53-bit uniform strictly inside (0, 1)
        u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        out[:, j] = ndtri(u)
    return out
