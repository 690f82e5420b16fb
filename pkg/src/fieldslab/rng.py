"""Seed derivation for reproducible, order-independent substreams.

Every stochastic component draws from a stream keyed by (root seed, stream
index) through a splitmix64 step, so results do not depend on scheduling or
degree of parallelism.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "make_generator"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def derive_seed(seed: int, index: int) -> int:
    """Deterministic 64-bit substream seed for (seed, index)."""
    with np.errstate(over="ignore"):
        s = (np.uint64(seed) + np.uint64(index + 1) * _GAMMA) & np.uint64(0xFFFFFFFFFFFFFFFF)
        z = s
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return int(z)


def make_generator(seed: int, index: int = 0) -> np.random.Generator:
    """Philox generator on the derived substream (counter-based, splittable)."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, index)))
