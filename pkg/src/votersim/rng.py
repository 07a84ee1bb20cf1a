"""Counter-based random streams.

Every stochastic component draws from a Philox generator keyed by
``(seed, *path)`` where the path identifies the consumer (site index and
stream kind for event logs, realization batch ids for Monte Carlo, ...).
Streams are therefore independent of each other and of the order in which
they are materialized: lazy and eager generation produce identical draws.
"""

from __future__ import annotations

import numpy as np

# stream kinds used by the event log
VOTER_KIND = 0
REACTION_KIND = 1

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, *path: int) -> np.ndarray:
    """Mix (seed, *path) into a 128-bit Philox key, stable across platforms."""
    h = _splitmix64(seed & _MASK64)
    for p in path:
        h = _splitmix64(h ^ (p & _MASK64))
    lo = _splitmix64(h)
    hi = _splitmix64(lo)
    return np.array([lo, hi], dtype=np.uint64)


def stream(seed: int, *path: int) -> np.random.Generator:
    """A fresh Generator for the (seed, *path) stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *path)))


def spawn_seed(seed: int, *path: int) -> int:
    """Derive a 63-bit child seed, e.g. for replicate fan-out."""
    key = stream_key(seed, *path)
    return int(key[0] >> 1)
