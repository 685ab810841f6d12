"""Reference computations that share no code with the rules under test.

``shapley_oracle`` averages marginal contributions over every ordering of the
players; ``harsanyi_dividends`` inverts the game into unanimity coordinates.
Both work on full value tables indexed by coalition bitmask.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from numpy.typing import NDArray

__all__ = ["DividendTable", "harsanyi_dividends", "shapley_oracle"]

ORACLE_MAX_N = 9
DIVIDEND_MAX_N = 20


def shapley_oracle(table: NDArray[np.float64], n: int) -> NDArray[np.float64]:
    """Shapley value as the mean marginal contribution over all ``n!`` orderings."""
    if n > ORACLE_MAX_N:
        raise ValueError(f"permutation oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    table = np.asarray(table, dtype=np.float64)
    if table.shape != (1 << n,):
        raise ValueError(f"expected a table of length {1 << n}, got {table.shape}")
    perms = np.array(list(permutations(range(n))), dtype=np.int64)
    bits = np.left_shift(1, perms)
    prefix = np.cumsum(bits, axis=1)
    before = prefix - bits
    gains = table[prefix] - table[before]
    totals = np.bincount(perms.ravel(), weights=gains.ravel(), minlength=n)
    return totals / len(perms)


@dataclass(frozen=True)
class DividendTable:
    """Harsanyi dividends, one per coalition bitmask."""

    n: int
    dividends: NDArray[np.float64]

    def worth(self) -> NDArray[np.float64]:
        """Rebuild ``v(S) = sum of dividends of subsets of S``."""
        return _zeta(self.dividends.copy(), self.n)

    def shapley(self) -> NDArray[np.float64]:
        """Equal split of each dividend among the members of its coalition."""
        out = np.zeros(self.n)
        for mask in range(1, 1 << self.n):
            size = bin(mask).count("1")
            share = self.dividends[mask] / size
            for j in range(self.n):
                if mask >> j & 1:
                    out[j] += share
        return out


def _zeta(a: NDArray, n: int) -> NDArray:
    for j in range(n):
        bit = 1 << j
        a = a.reshape(-1, 2, bit)
        a[:, 1, :] += a[:, 0, :]
        a = a.reshape(-1)
    return a


def harsanyi_dividends(table: NDArray[np.float64], n: int) -> DividendTable:
    """Moebius transform of ``table``, with ``v(empty)`` as the empty dividend."""
    if n > DIVIDEND_MAX_N:
        raise ValueError(f"dividends limited to n <= {DIVIDEND_MAX_N}, got {n}")
    a = np.array(table, dtype=np.float64)
    if a.shape != (1 << n,):
        raise ValueError(f"expected a table of length {1 << n}, got {a.shape}")
    for j in range(n):
        bit = 1 << j
        a = a.reshape(-1, 2, bit)
        a[:, 1, :] -= a[:, 0, :]
        a = a.reshape(-1)
    return DividendTable(n, a)
