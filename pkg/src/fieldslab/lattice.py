"""Torus geometry, particle configurations and admissibility checks.

Sites are stored as flat integer indices in ``range(N**d)``; the mapping to
coordinate vectors is row-major with axis 0 slowest.  Occupancy
configurations are plain ``numpy`` integer arrays of length ``N**d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "Torus",
    "neighbors",
    "is_admissible",
    "tuple_is_admissible",
    "particle_count",
]


@dataclass(frozen=True)
class Torus:
    """Discrete periodic lattice {0,...,N-1}^d.

    The macroscopic torus is [0,1)^d; site x sits at position x/N.  Every
    site has exactly 2d directed edges out of it.  For N=2 the two
    directions along an axis reach the same site and both directed edges
    are kept (degenerate double edge).
    """

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.N < 2:
            raise ValueError("side length must be >= 2")

    @property
    def n_sites(self) -> int:
        return self.N**self.d

    def site_index(self, coords) -> int:
        idx = 0
        for c in coords:
            idx = idx * self.N + (int(c) % self.N)
        return idx

    def site_coords(self, index: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.d):
            out.append(index % self.N)
            index //= self.N
        return tuple(reversed(out))

    def neighbor_table(self) -> np.ndarray:
        """(n_sites, 2d) array; columns [2j, 2j+1] are -/+ steps on axis j."""
        return _neighbor_table(self.d, self.N)

    def positions(self) -> np.ndarray:
        """(n_sites, d) array of macroscopic positions x/N in [0,1)^d."""
        return _positions(self.d, self.N)


@lru_cache(maxsize=None)
def _neighbor_table(d: int, N: int) -> np.ndarray:
    n = N**d
    idx = np.arange(n)
    coords = np.empty((n, d), dtype=np.int64)
    rem = idx.copy()
    for axis in range(d - 1, -1, -1):
        coords[:, axis] = rem % N
        rem //= N
    table = np.empty((n, 2 * d), dtype=np.int64)
    weights = N ** np.arange(d - 1, -1, -1)
    for axis in range(d):
        for sgn, col in ((-1, 2 * axis), (+1, 2 * axis + 1)):
            shifted = coords.copy()
            shifted[:, axis] = (shifted[:, axis] + sgn) % N
            table[:, col] = shifted @ weights
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _positions(d: int, N: int) -> np.ndarray:
    n = N**d
    idx = np.arange(n)
    pos = np.empty((n, d), dtype=np.float64)
    rem = idx.copy()
    for axis in range(d - 1, -1, -1):
        pos[:, axis] = (rem % N) / N
        rem //= N
    pos.setflags(write=False)
    return pos


def neighbors(site, torus: Torus):
    """The 2d neighbors of a site, with multiplicity (N=2 doubles up).

    Accepts a flat index or a coordinate sequence and answers in kind.
    """
    if np.isscalar(site) or isinstance(site, (int, np.integer)):
        return [int(s) for s in torus.neighbor_table()[int(site)]]
    flat = torus.site_index(site)
    return [torus.site_coords(int(s)) for s in torus.neighbor_table()[flat]]


def particle_count(occupancy: np.ndarray) -> int:
    return int(np.sum(occupancy))


def is_admissible(occupancy: np.ndarray, sigma: int, alpha: int) -> bool:
    """True unless exclusion (sigma=-1) and some site exceeds alpha."""
    occupancy = np.asarray(occupancy)
    if np.any(occupancy < 0):
        return False
    if sigma == -1:
        return bool(np.all(occupancy <= alpha))
    return True


def tuple_is_admissible(sites, sigma: int, alpha: int) -> bool:
    """True unless exclusion and some site carries more than alpha labels."""
    if sigma != -1:
        return True
    _, counts = np.unique(np.asarray(sites, dtype=np.int64), return_counts=True)
    return bool(counts.size == 0 or counts.max() <= alpha)
