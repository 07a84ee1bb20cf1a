"""Finite-support random-walk step kernels on Z^d and offspring laws.

Weights are kept as exact rationals so the standing assumptions (symmetry,
isotropic covariance, normalization, irreducibility) can be checked exactly;
floats appear only at sampling time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AsymmetricError,
    NonIsotropicError,
    NotNormalizedError,
    OriginInSupportError,
    ReducibleError,
)

Rational = Fraction | int


@dataclass(frozen=True)
class Kernel:
    """A finite-support probability law p on Z^d (the voter step law)."""

    dim: int
    offsets: np.ndarray                 # (n, dim) int64
    weights: tuple[Fraction, ...]       # exact, same order as offsets

    _weights_f: np.ndarray = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(np.asarray(self.offsets, dtype=np.int64))
        if offsets.ndim != 2 or offsets.shape[1] != self.dim:
            raise ValueError("offsets must have shape (n, dim)")
        if len(self.weights) != offsets.shape[0]:
            raise ValueError("weights and offsets length mismatch")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", tuple(Fraction(w) for w in self.weights))
        wf = np.array([float(w) for w in self.weights])
        object.__setattr__(self, "_weights_f", wf)
        object.__setattr__(self, "_cdf", np.cumsum(wf))

    @property
    def n_atoms(self) -> int:
        return self.offsets.shape[0]

    @property
    def weights_float(self) -> np.ndarray:
        return self._weights_f

    @property
    def range(self) -> int:
        """Sup-norm radius of the support."""
        return int(np.abs(self.offsets).max())

    @property
    def is_uniform(self) -> bool:
        return len(set(self.weights)) == 1

    @property
    def sigma2(self) -> Fraction:
        """Per-coordinate step variance (exact)."""
        return sum(
            (w * int(x[0]) * int(x[0]) for w, x in zip(self.weights, self.offsets)),
            Fraction(0),
        )

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Indices of n iid atoms, by inverse CDF on a single uniform each."""
        u = rng.random(n)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64)

    def index_of(self, offset: Sequence[int]) -> int:
        """Row index of an offset, or -1."""
        m = np.all(self.offsets == np.asarray(offset, dtype=np.int64), axis=1)
        idx = np.nonzero(m)[0]
        return int(idx[0]) if idx.size else -1


def make_kernel(dim: int, atoms: Iterable[tuple[Sequence[int], Rational]]) -> Kernel:
    offsets, weights = [], []
    for off, w in atoms:
        offsets.append(tuple(int(c) for c in off))
        weights.append(Fraction(w))
    if len(set(offsets)) != len(offsets):
        raise ValueError("duplicate offsets in kernel support")
    return Kernel(dim, np.array(offsets, dtype=np.int64).reshape(len(offsets), dim),
                  tuple(weights))


def nn_kernel(d: int) -> Kernel:
    """Uniform law on the 2d unit vectors; sigma2 = 1/d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    atoms = []
    w = Fraction(1, 2 * d)
    for i in range(d):
        for s in (1, -1):
            off = [0] * d
            off[i] = s
            atoms.append((off, w))
    return make_kernel(d, atoms)


def box_kernel(d: int, L: int) -> Kernel:
    """Uniform law on the integer points of [-L, L]^d minus the origin."""
    if d < 1 or L < 1:
        raise ValueError("need d >= 1 and L >= 1")
    pts = [p for p in product(range(-L, L + 1), repeat=d) if any(p)]
    w = Fraction(1, len(pts))
    return make_kernel(d, [(p, w) for p in pts])


def _lattice_is_full(offsets: np.ndarray) -> bool:
    """Whether the rows generate Z^d as an additive group.

    Integer row reduction to upper-triangular (Hermite-style); the group is
    all of Z^d iff every pivot is +-1.
    """
    rows = [list(map(int, r)) for r in offsets]
    d = offsets.shape[1]
    col = 0
    for col in range(d):
        pivot = None
        # gcd-eliminate column `col` across remaining rows
        while True:
            nz = [r for r in rows if r[col] != 0]
            if not nz:
                return False
            nz.sort(key=lambda r: abs(r[col]))
            pivot = nz[0]
            done = True
            for r in rows:
                if r is pivot or r[col] == 0:
                    continue
                q = r[col] // pivot[col]
                for j in range(d):
                    r[j] -= q * pivot[j]
                if r[col] != 0:
                    done = False
            if done:
                break
        if abs(pivot[col]) != 1:
            return False
        rows.remove(pivot)
        rows = [r for r in rows if any(r[col + 1:])] or rows
    return True


def validate(k: Kernel) -> Fraction:
    """Check all standing kernel assumptions; return sigma2 on success."""
    total = sum(k.weights, Fraction(0))
    if total != 1:
        raise NotNormalizedError(f"weights sum to {total}, not 1")
    if any(w <= 0 for w in k.weights):
        raise NotNormalizedError("all weights must be positive")
    table = {tuple(map(int, off)): w for off, w in zip(k.offsets, k.weights)}
    if tuple([0] * k.dim) in table:
        raise OriginInSupportError("p(0) must be 0")
    for off, w in table.items():
        neg = tuple(-c for c in off)
        if table.get(neg) != w:
            raise AsymmetricError(f"p({off}) != p({neg})")
    # isotropy: sum p(x) x_i x_j = sigma2 * delta_ij, exactly
    d = k.dim
    sigma2 = k.sigma2
    for i in range(d):
        for j in range(i, d):
            s = sum(
                (w * int(x[i]) * int(x[j]) for x, w in zip(k.offsets, k.weights)),
                Fraction(0),
            )
            want = sigma2 if i == j else Fraction(0)
            if s != want:
                raise NonIsotropicError(
                    f"sum p(x) x_{i} x_{j} = {s}, expected {want}"
                )
    if not _lattice_is_full(k.offsets):
        raise ReducibleError("support does not generate Z^d")
    return sigma2


def sample_step(k: Kernel, rng: np.random.Generator) -> np.ndarray:
    """One step drawn from the kernel; deterministic given the rng state."""
    return k.offsets[k.sample_indices(rng, 1)[0]].copy()


@dataclass(frozen=True)
class OffspringLaw:
    """The law q of the offspring displacement vector (Y^1, ..., Y^N0)."""

    n0: int
    dim: int
    vectors: np.ndarray   # (n_atoms, n0, dim) int64
    probs: np.ndarray     # (n_atoms,) float64

    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vectors = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.int64))
        probs = np.asarray(self.probs, dtype=np.float64)
        if vectors.ndim != 3 or vectors.shape[1:] != (self.n0, self.dim):
            raise ValueError("vectors must have shape (n_atoms, n0, dim)")
        if probs.shape != (vectors.shape[0],):
            raise ValueError("probs and vectors length mismatch")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise NotNormalizedError("offspring probabilities must sum to 1")
        if (probs <= 0).any():
            raise NotNormalizedError("offspring probabilities must be positive")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", np.cumsum(probs))

    @property
    def n_atoms(self) -> int:
        return self.vectors.shape[0]

    @property
    def range(self) -> int:
        """Sup-norm radius R0 of the support box."""
        return int(np.abs(self.vectors).max())

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64)


def independent_pair_law(k: Kernel) -> OffspringLaw:
    """(Y^1, Y^2) iid with law p: N0 = 2, atom probabilities p(y1) p(y2)."""
    n = k.n_atoms
    vecs = np.empty((n * n, 2, k.dim), dtype=np.int64)
    probs = np.empty(n * n)
    idx = 0
    for i in range(n):
        for j in range(n):
            vecs[idx, 0] = k.offsets[i]
            vecs[idx, 1] = k.offsets[j]
            probs[idx] = k.weights_float[i] * k.weights_float[j]
            idx += 1
    return OffspringLaw(2, k.dim, vecs, probs)


def singleton_law(k: Kernel) -> OffspringLaw:
    """N0 = 1 offspring law equal to the step kernel itself."""
    return OffspringLaw(1, k.dim, k.offsets[:, None, :], k.weights_float.copy())


def deterministic_law(points: np.ndarray) -> OffspringLaw:
    """Point mass on one fixed vector of offsets (used by the g-form reduction)."""
    pts = np.asarray(points, dtype=np.int64)
    return OffspringLaw(pts.shape[0], pts.shape[1], pts[None, :, :], np.array([1.0]))


def without_replacement_law(points: np.ndarray, m: int) -> OffspringLaw:
    """Uniform law on ordered m-tuples of distinct rows of `points`."""
    pts = np.asarray(points, dtype=np.int64)
    n, d = pts.shape
    if m > n:
        raise ValueError(f"cannot draw {m} distinct points from {n}")
    from itertools import permutations

    tuples = list(permutations(range(n), m))
    vecs = pts[np.array(tuples, dtype=np.int64)]      # (n_atoms, m, d)
    probs = np.full(len(tuples), 1.0 / len(tuples))
    return OffspringLaw(m, d, vecs, probs)
