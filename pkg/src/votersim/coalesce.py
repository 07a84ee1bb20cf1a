"""Monte Carlo for coalescing random walks and the generic reaction polynomial.

All walkers jump at rate 1; co-located walkers share jumps (graphical
construction), so meeting is permanent and the restriction of a realization
to any subset of walkers is again a coalescing system.  Two-walker queries
use the difference-walk reduction (a rate-2 walk hitting the origin); larger
systems run a uniformized shared-clock simulation vectorized over
realizations.  Merge events carry their times, so one batch can be evaluated
at any cutoff below its horizon.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import rng as _rng
from .errors import NotUniformKernelError
from .kernels import Kernel, OffspringLaw
from .reaction import ReactionPolynomial

__all__ = [
    "PatternQuery", "CoalescenceEstimate", "CoalescenceBatch", "parse_pattern",
    "run_batch", "estimate", "estimate_many", "lemma19_check", "g_to_basis",
    "reaction_poly_mc", "estimate_nu0", "Nu0Estimate",
]


# --------------------------------------------------------------------------
# queries

@dataclass(frozen=True)
class Member:
    """One start point: an integer offset plus a sum of kernel draws e_i."""

    symbols: tuple[int, ...] = ()
    const: tuple[int, ...] | None = None

    def __str__(self):
        parts = [f"e{s}" for s in self.symbols]
        if self.const is not None and any(self.const):
            parts.append("(" + ",".join(str(c) for c in self.const) + ")")
        return "+".join(parts) if parts else "0"


@dataclass(frozen=True)
class PatternQuery:
    """Groups of start points; within a group walkers must meet by the
    cutoff, across groups they must not."""

    groups: tuple[tuple[Member, ...], ...]

    def __post_init__(self):
        if not self.groups or any(not g for g in self.groups):
            raise ValueError("groups must be nonempty")

    @property
    def n_walkers(self) -> int:
        return sum(len(g) for g in self.groups)

    def __str__(self):
        return "|".join(",".join(str(m) for m in g) for g in self.groups)


_TOKEN = re.compile(r"^(0|e(\d+)|\((-?\d+(?:,-?\d+)*)\))$")


def parse_pattern(text: str) -> PatternQuery:
    """Parse notation like '0|e1,e2' or 'e1|e2+e3'; '(1,0,0)' is a literal."""
    groups = []
    for part in text.split("|"):
        members = []
        for token in part.split(","):
            symbols: list[int] = []
            const = None
            for term in token.strip().split("+"):
                m = _TOKEN.match(term.strip())
                if not m:
                    raise ValueError(f"bad pattern term {term!r}")
                if m.group(2) is not None:
                    symbols.append(int(m.group(2)))
                elif m.group(3) is not None:
                    vec = tuple(int(v) for v in m.group(3).split(","))
                    const = vec if const is None else tuple(
                        a + b for a, b in zip(const, vec))
            members.append(Member(tuple(symbols), const))
        groups.append(tuple(members))
    return PatternQuery(tuple(groups))


@dataclass(frozen=True)
class CoalescenceEstimate:
    value: float
    stderr: float
    n: int
    cutoff: float
    tail_bound: bool = False
    cutoff_bias: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("estimate must lie in [0, 1]")


# --------------------------------------------------------------------------
# shared-clock multi-walker batches

@dataclass
class CoalescenceBatch:
    """Realized merge histories for n k-walker systems up to a horizon."""

    n: int
    k: int
    horizon: float
    initial_labels: np.ndarray           # (n, k) int8, min-index cluster ids
    merges: list[list[tuple[float, int, int]]]   # per realization (t, id, target)

    def labels_at(self, cutoff: float) -> np.ndarray:
        """Cluster labels when every merge with time <= cutoff is applied."""
        if cutoff > self.horizon:
            raise ValueError("cutoff exceeds the simulated horizon")
        labels = self.initial_labels.copy()
        for i, evs in enumerate(self.merges):
            row = labels[i]
            for t, cid, tgt in evs:
                if t > cutoff:
                    break
                row[row == cid] = tgt
        return labels


def run_batch(starts: np.ndarray, kernel: Kernel, horizon: float,
              seed: int) -> CoalescenceBatch:
    """Simulate n coalescing systems from starts of shape (n, k, d)."""
    starts = np.asarray(starts, dtype=np.int64)
    n, k, d = starts.shape
    pos = starts.copy()
    labels = np.zeros((n, k), dtype=np.int8)
    for w in range(k):
        lab = np.full(n, w, dtype=np.int8)
        for w2 in range(w):
            dup = (pos[:, w, :] == pos[:, w2, :]).all(axis=1) & (lab == w)
            lab[dup] = labels[dup, w2]
        labels[:, w] = lab
    merges: list[list[tuple[float, int, int]]] = [[] for _ in range(n)]
    gen = _rng.stream(seed, 0xC0A1)
    t = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    for i in range(n):
        if (labels[i] == 0).all():
            done[i] = True
    cdf = kernel._cdf
    offsets = kernel.offsets
    rows = np.arange(n)
    while True:
        active = ~done & (t < horizon)
        if not active.any():
            break
        t_new = t + gen.standard_exponential(n) / k
        c = gen.integers(0, k, n)
        step = offsets[np.searchsorted(cdf, gen.random(n), "right")]
        move = active & (t_new < horizon) & (labels[rows, c] == c)
        member = (labels == c[:, None]) & move[:, None]
        pos += step[:, None, :] * member[:, :, None]
        if move.any():
            ref = pos[rows, c]
            same = (pos == ref[:, None, :]).all(-1) & move[:, None]
            other = same & (labels != c[:, None])
            for i in np.nonzero(other.any(axis=1))[0]:
                ids = np.unique(labels[i][same[i]])
                tgt = int(ids[0])
                for cid in ids[1:]:
                    merges[i].append((float(t_new[i]), int(cid), tgt))
                    labels[i][labels[i] == cid] = tgt
                if (labels[i] == labels[i][0]).all():
                    done[i] = True
        t = np.where(active, t_new, t)
    return CoalescenceBatch(n, k, horizon, labels, merges)


def pair_hit_times(starts: np.ndarray, kernel: Kernel, cutoff: float,
                   seed: int, block: int = 64,
                   slice_size: int = 100_000) -> np.ndarray:
    """First zero-hitting time (or +inf past the cutoff) of rate-2 walks.

    This is the difference walk of two rate-1 coalescing walkers; starts at
    the origin count as hits at time 0.
    """
    starts = np.asarray(starts, dtype=np.int64)
    out = np.full(starts.shape[0], np.inf)
    for lo in range(0, starts.shape[0], slice_size):
        out[lo:lo + slice_size] = _pair_hit_slice(
            starts[lo:lo + slice_size], kernel, cutoff,
            _rng.spawn_seed(seed, 0xD1FF, lo), block)
    return out


def _pair_hit_slice(starts, kernel, cutoff, seed, block):
    n = starts.shape[0]
    gen = _rng.stream(seed)
    hit_time = np.full(n, np.inf)
    at_zero = (starts == 0).all(axis=1)
    hit_time[at_zero] = 0.0
    idx = np.nonzero(~at_zero)[0]
    pos = starts[idx].astype(np.int32)
    t = np.zeros(idx.shape[0])
    cdf = kernel._cdf
    offsets = kernel.offsets.astype(np.int32)
    while idx.size:
        m = idx.shape[0]
        dts = gen.standard_exponential((m, block)) / 2.0
        times = t[:, None] + np.cumsum(dts, axis=1)
        steps = offsets[np.searchsorted(cdf, gen.random((m, block)), "right")]
        path = pos[:, None, :] + np.cumsum(steps, axis=1, dtype=np.int32)
        hits = (path == 0).all(axis=2) & (times <= cutoff)
        any_hit = hits.any(axis=1)
        if any_hit.any():
            first = np.argmax(hits[any_hit], axis=1)
            hit_time[idx[any_hit]] = times[any_hit, first]
        alive = ~any_hit & (times[:, -1] < cutoff)
        idx = idx[alive]
        pos = path[alive, -1]
        t = times[alive, -1]
    return hit_time


# --------------------------------------------------------------------------
# pattern estimation

def _realize_starts(groups, kernel: Kernel, n: int, seed: int) -> np.ndarray:
    d = kernel.dim
    symbols = sorted({s for g in groups for m in g for s in m.symbols})
    draws = {}
    gen = _rng.stream(seed, 0x5EED)
    for s in symbols:
        draws[s] = kernel.offsets[kernel.sample_indices(gen, n)]
    members = [m for g in groups for m in g]
    starts = np.zeros((n, len(members), d), dtype=np.int64)
    for j, m in enumerate(members):
        acc = np.zeros((n, d), dtype=np.int64)
        for s in m.symbols:
            acc += draws[s]
        if m.const is not None:
            if len(m.const) != d:
                raise ValueError("literal offset has wrong dimension")
            acc += np.asarray(m.const, dtype=np.int64)
        starts[:, j, :] = acc
    return starts


def _pattern_holds(labels: np.ndarray, group_sizes: Sequence[int]) -> np.ndarray:
    """Row-wise indicator: within-group labels equal, across-group disjoint."""
    n = labels.shape[0]
    ok = np.ones(n, dtype=bool)
    reps = []
    pos = 0
    for size in group_sizes:
        block = labels[:, pos:pos + size]
        ok &= (block == block[:, :1]).all(axis=1)
        reps.append(block[:, 0])
        pos += size
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            ok &= reps[a] != reps[b]
    return ok


def estimate_many(queries: Iterable[PatternQuery | str], k: Kernel,
                  cutoff: float, n: int, seed: int,
                  extrapolate: bool = False) -> list[CoalescenceEstimate]:
    """Estimate several patterns on shared realizations (per start-layout)."""
    parsed = [parse_pattern(q) if isinstance(q, str) else q for q in queries]
    out: list[CoalescenceEstimate] = []
    for qi, q in enumerate(parsed):
        group_sizes = [len(g) for g in q.groups]
        starts = _realize_starts(q.groups, k, n, _rng.spawn_seed(seed, 11, qi))
        walk_seed = _rng.spawn_seed(seed, 13, qi)
        if q.n_walkers == 2:
            diff = starts[:, 0, :] - starts[:, 1, :]
            ht = pair_hit_times(diff, k, cutoff, walk_seed)
            met_full = ht <= cutoff
            hold_full = met_full if len(group_sizes) == 1 else ~met_full
            if extrapolate:
                met_half = ht <= cutoff / 2
                hold_half = met_half if len(group_sizes) == 1 else ~met_half
        else:
            batch = run_batch(starts, k, cutoff, walk_seed)
            hold_full = _pattern_holds(batch.labels_at(cutoff), group_sizes)
            if extrapolate:
                hold_half = _pattern_holds(batch.labels_at(cutoff / 2),
                                           group_sizes)
        value = float(hold_full.mean())
        stderr = float(np.sqrt(value * (1 - value) / n))
        bias = float(hold_half.mean() - value) if extrapolate else None
        out.append(CoalescenceEstimate(value, stderr, n, cutoff,
                                       tail_bound=extrapolate,
                                       cutoff_bias=bias))
    return out


def estimate(query: PatternQuery | str, k: Kernel, cutoff: float, n: int,
             seed: int, extrapolate: bool = False) -> CoalescenceEstimate:
    """Fraction of realizations matching the meet/avoid pattern by the cutoff.

    Never-coalesce patterns are upper-biased by the finite cutoff; request
    `extrapolate` to also report the half-cutoff difference as a bias hint.
    """
    return estimate_many([query], k, cutoff, n, seed, extrapolate)[0]


@dataclass(frozen=True)
class Lemma19Report:
    p_0_e1: CoalescenceEstimate
    p_e1_e2: CoalescenceEstimate
    p_e1_e23: CoalescenceEstimate
    residual_a: float
    residual_a_stderr: float
    ratio_b: float
    ratio_b_stderr: float
    ratio_b_target: float


def lemma19_check(k: Kernel, cutoff: float, n: int, seed: int) -> Lemma19Report:
    """Check the coalescing-walk identities p(e1|e2) = p(0|e1) and
    p(e1|e2+e3) = (1 + 1/k) p(0|e1) for a uniform neighborhood kernel."""
    if not k.is_uniform:
        raise NotUniformKernelError("identity (b) needs equal atom weights")
    p0, pa, pb = estimate_many(["0|e1", "e1|e2", "e1|e2+e3"], k, cutoff, n, seed)
    res_a = pa.value - p0.value
    res_a_se = float(np.hypot(pa.stderr, p0.stderr))
    ratio = pb.value / p0.value
    ratio_se = abs(ratio) * float(np.hypot(pb.stderr / pb.value,
                                           p0.stderr / p0.value))
    return Lemma19Report(p0, pa, pb, res_a, res_a_se, ratio, ratio_se,
                         1.0 + 1.0 / k.n_atoms)


# --------------------------------------------------------------------------
# basis transform and the generic reaction polynomial

def _moebius(table: Sequence) -> list:
    """Alternating-sum transform over the subset lattice (exact)."""
    f = [Fraction(v) if not isinstance(v, Fraction) else v for v in table]
    size = len(f)
    n0 = size.bit_length() - 1
    if 1 << n0 != size:
        raise ValueError("table length must be a power of two")
    for j in range(n0):
        bit = 1 << j
        for mask in range(size):
            if mask & bit:
                f[mask] = f[mask] - f[mask ^ bit]
    return f


def subset_eval(coeffs: Sequence, eta_bits: int) -> Fraction:
    """Evaluate sum_S beta(S) prod_{i in S} eta_i at a bit pattern."""
    total = Fraction(0)
    for mask, c in enumerate(coeffs):
        if (mask & eta_bits) == mask:
            total += Fraction(c) if not isinstance(c, Fraction) else c
    return total


def g_to_basis(g0: Sequence, g1: Sequence) -> tuple[list, list]:
    """Exact inclusion-exclusion coefficients (beta_hat from g1, delta_hat
    from g0), indexed by subset bitmask."""
    return _moebius(g1), _moebius(g0)


def reaction_poly_mc(p, k: Kernel, cutoff: float, n: int,
                     seed: int) -> ReactionPolynomial:
    """Monte Carlo reaction polynomial of an arbitrary g-form perturbation.

    Runs coalescing walkers from {0, Y^1, ..., Y^N0} per realization and
    assembles the degree <= N0+1 polynomial from the basis coefficients of
    the g tables and the realized coalescence/avoidance indicators, with a
    per-coefficient standard error.  The eps1 voter correction inside the g
    tables contributes exactly zero and needs no special handling.
    """
    law: OffspringLaw = p.offspring
    n0 = law.n0
    beta, delta = g_to_basis(p.g0, p.g1)
    beta = np.array([float(b) for b in beta])
    delta = np.array([float(d) for d in delta])
    gen = _rng.stream(seed, 0xF00D)
    atom = law.sample_indices(gen, n)
    starts = np.zeros((n, n0 + 1, k.dim), dtype=np.int64)
    starts[:, 1:, :] = law.vectors[atom]
    batch = run_batch(starts, k, cutoff, _rng.spawn_seed(seed, 0xF00D))
    labels = batch.labels_at(cutoff)
    coeffs = np.zeros((n, n0 + 2))
    fp0 = np.zeros(n)
    rows = np.arange(n)
    for mask in range(1 << n0):
        walkers = [j + 1 for j in range(n0) if mask & (1 << j)]
        if walkers:
            sub = np.sort(labels[:, walkers], axis=1)
            ncl = 1 + (np.diff(sub, axis=1) != 0).sum(axis=1)
            met0 = (labels[:, walkers] == labels[:, :1]).any(axis=1)
        else:
            ncl = np.zeros(n, dtype=np.int64)
            met0 = np.zeros(n, dtype=bool)
        b = beta[mask]
        if b != 0.0:
            if mask == 0:
                coeffs[:, 0] += b
                coeffs[:, 1] -= b
            else:
                ok = ~met0
                np.add.at(coeffs, (rows[ok], ncl[ok]), b)
                np.add.at(coeffs, (rows[ok], ncl[ok] + 1), -b)
                fp0 += b * (ok & (ncl == 1))
        d = delta[mask]
        if d != 0.0:
            subl = np.sort(np.concatenate([labels[:, :1], labels[:, walkers]],
                                          axis=1), axis=1)
            ncl0 = 1 + (np.diff(subl, axis=1) != 0).sum(axis=1)
            np.add.at(coeffs, (rows, ncl0), -d)
            fp0 -= d * (ncl0 == 1)
    mean = coeffs.mean(axis=0)
    se = coeffs.std(axis=0, ddof=1) / np.sqrt(n)
    fprime0 = (float(fp0.mean()), float(fp0.std(ddof=1) / np.sqrt(n))) \
        if beta[0] == 0.0 else None
    return ReactionPolynomial(tuple(mean), stderr=tuple(se),
                              provenance="monte-carlo", fprime0=fprime0)


# --------------------------------------------------------------------------
# partition law of the offspring coalescent

def canonical_partition(labels_row: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    blocks: dict[int, list[int]] = {}
    for el, lab in enumerate(labels_row):
        blocks.setdefault(int(lab), []).append(el)
    return tuple(tuple(b) for _, b in sorted(blocks.items()))


@dataclass(frozen=True)
class Nu0Estimate:
    """Empirical law on set partitions of {0, ..., N0} of the coalescent
    started from the origin and one offspring draw."""

    n0: int
    partitions: tuple[tuple[tuple[int, ...], ...], ...]
    probs: np.ndarray
    stderr: np.ndarray
    n: int
    cutoff: float

    def prob_of(self, partition) -> float:
        key = tuple(tuple(b) for b in partition)
        for p, v in zip(self.partitions, self.probs):
            if p == key:
                return float(v)
        return 0.0

    def cells_matrix(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cells, sizes, cdf) arrays for samplers: cells[p, el] is the cell
        id of element el, numbered by first appearance so element 0 is 0."""
        npart = len(self.partitions)
        cells = np.zeros((npart, self.n0 + 1), dtype=np.int8)
        sizes = np.zeros(npart, dtype=np.int64)
        for pi, part in enumerate(self.partitions):
            for ci, block in enumerate(part):
                for el in block:
                    cells[pi, el] = ci
            sizes[pi] = len(part)
        return cells, sizes, np.cumsum(self.probs)


def estimate_nu0(offspring: OffspringLaw, k: Kernel, cutoff: float, n: int,
                 seed: int) -> Nu0Estimate:
    """Coalescence partition law of walkers from (0, Y^1, ..., Y^N0)."""
    n0 = offspring.n0
    gen = _rng.stream(seed, 0x0770)
    atom = offspring.sample_indices(gen, n)
    starts = np.zeros((n, n0 + 1, k.dim), dtype=np.int64)
    starts[:, 1:, :] = offspring.vectors[atom]
    batch = run_batch(starts, k, cutoff, _rng.spawn_seed(seed, 0x0770))
    labels = batch.labels_at(cutoff)
    counts: dict[tuple, int] = {}
    for i in range(n):
        key = canonical_partition(labels[i])
        counts[key] = counts.get(key, 0) + 1
    parts = tuple(sorted(counts, key=lambda p: (len(p), p)))
    probs = np.array([counts[p] / n for p in parts])
    stderr = np.sqrt(probs * (1 - probs) / n)
    return Nu0Estimate(n0, parts, probs, stderr, n, cutoff)
