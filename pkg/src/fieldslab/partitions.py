"""Set-partition enumeration and the cell weights used by the fast field
evaluator and the closed-form moment formulas.

Two weight sequences recur.  Writing m for a cell size:

- ``field_cell_weight(m)``  = (-1)**(m-1) * (m-1)!
  The connected coefficients of the falling factorials: summing
  ``prod_B [n]_{|B|}`` against Mobius weights over all partitions of a
  cell collapses to this multiple of n (the cumulants of log(1+t)**... ;
  concretely ``sum_{p |- [m]} (-1)^{|p|-1}(|p|-1)! prod_B [n]_{|B|} =
  (-1)**(m-1) (m-1)! n`` for every integer n).

- ``weight_cell_weight(m, sigma, alpha)`` = alpha * sigma**(m-1) * (m-1)!
  The analogous connected coefficients of the tuple-weight factors
  ``a_m = alpha (alpha+sigma) ... (alpha+(m-1) sigma)``.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

__all__ = [
    "set_partitions",
    "partitions_of_size",
    "field_cell_weight",
    "weight_cell_weight",
    "nonempty_subsets",
]


def set_partitions(items):
    """Yield all partitions of ``items`` as lists of tuples.

    Standard recursive scheme: element 0 opens the first block; each later
    element either joins an existing block or opens a new one.
    """
    items = list(items)
    if not items:
        yield []
        return

    def rec(pos, blocks):
        if pos == len(items):
            yield [tuple(b) for b in blocks]
            return
        x = items[pos]
        for b in blocks:
            b.append(x)
            yield from rec(pos + 1, blocks)
            b.pop()
        blocks.append([x])
        yield from rec(pos + 1, blocks)
        blocks.pop()

    yield from rec(1, [[items[0]]])


@lru_cache(maxsize=None)
def partitions_of_size(k: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """All partitions of range(k), cached (Bell(k) of them)."""
    return tuple(tuple(p) for p in set_partitions(range(k)))


def field_cell_weight(m: int) -> float:
    return float((-1) ** (m - 1) * factorial(m - 1))


def weight_cell_weight(m: int, sigma: int, alpha: int) -> float:
    return float(alpha * sigma ** (m - 1) * factorial(m - 1))


def nonempty_subsets(k: int):
    """All non-empty subsets of range(k) as bitmask-ordered tuples."""
    out = []
    for mask in range(1, 1 << k):
        out.append(tuple(i for i in range(k) if mask >> i & 1))
    return out
