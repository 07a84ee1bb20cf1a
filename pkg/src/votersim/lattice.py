"""Torus configurations and site index arithmetic shared by the engines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlockMisalignedError

_INDEX_DTYPE = np.int64


@dataclass
class Configuration:
    """{0,1}-valued state on a d-dimensional torus of side M (M^d sites)."""

    dim: int
    side: int
    values: np.ndarray   # uint8, flat C-order over coordinates

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.uint8))
        if values.shape != (self.side ** self.dim,):
            raise ValueError("values must be flat with side**dim entries")
        self.values = values

    @classmethod
    def constant(cls, dim: int, side: int, value: int) -> "Configuration":
        return cls(dim, side, np.full(side ** dim, value, dtype=np.uint8))

    @classmethod
    def bernoulli(cls, dim: int, side: int, density: float,
                  rng: np.random.Generator) -> "Configuration":
        vals = (rng.random(side ** dim) < density).astype(np.uint8)
        return cls(dim, side, vals)

    @property
    def nsites(self) -> int:
        return self.values.shape[0]

    def density(self) -> float:
        return float(self.values.mean())

    def copy(self) -> "Configuration":
        return Configuration(self.dim, self.side, self.values.copy())

    def __eq__(self, other) -> bool:
        return (isinstance(other, Configuration) and self.dim == other.dim
                and self.side == other.side
                and np.array_equal(self.values, other.values))


def site_coords(index, dim: int, side: int) -> np.ndarray:
    """Coordinates of flat indices (C-order)."""
    idx = np.asarray(index, dtype=_INDEX_DTYPE)
    out = np.empty(idx.shape + (dim,), dtype=_INDEX_DTYPE)
    for axis in range(dim - 1, -1, -1):
        out[..., axis] = idx % side
        idx = idx // side
    return out


def coords_to_site(coords, side: int) -> np.ndarray:
    """Flat indices of coordinate vectors, with torus wraparound."""
    c = np.mod(np.asarray(coords, dtype=_INDEX_DTYPE), side)
    idx = c[..., 0].copy()
    for axis in range(1, c.shape[-1]):
        idx = idx * side + c[..., axis]
    return idx


def shift_sites(index, offset, dim: int, side: int) -> np.ndarray:
    """Flat indices of (site + offset) on the torus; offset may be batched."""
    c = site_coords(index, dim, side)
    return coords_to_site(c + np.asarray(offset, dtype=_INDEX_DTYPE), side)


def neighbor_table(offsets: np.ndarray, dim: int, side: int) -> np.ndarray:
    """(nsites, n_offsets) table of shifted flat indices for every site."""
    n = side ** dim
    sites = np.arange(n, dtype=_INDEX_DTYPE)
    cols = [shift_sites(sites, off, dim, side) for off in offsets]
    return np.stack(cols, axis=1).astype(np.int64)


def coarse_density(config: Configuration, block_side: int) -> np.ndarray:
    """Averages of the configuration over disjoint blocks of side `block_side`.

    Returns an array of shape (side // block_side,) * dim.
    """
    m, a, d = config.side, block_side, config.dim
    if a < 1 or m % a != 0:
        raise BlockMisalignedError(f"block side {a} does not divide torus side {m}")
    nb = m // a
    arr = config.values.reshape(sum(((nb, a) for _ in range(d)), ()))
    block_axes = tuple(2 * i + 1 for i in range(d))
    return arr.mean(axis=block_axes)
