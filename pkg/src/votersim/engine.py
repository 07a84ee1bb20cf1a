"""Exact forward simulation of the particle system on a torus.

The graphical backend realizes the per-site Poisson event streams (voter
arrows at the model's walk rate, reaction marks at rate cstar) and applies
them in global time order; the direct backend runs the equivalent CTMC with
exact flip rates via a next-event scheme.  Event streams are counter-based:
stream identity is (seed, site, kind), so logs are reproducible under lazy,
eager or chunked generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from ._fastpath import apply_graphical_events, gillespie_game, gillespie_table
from .errors import HorizonExceededError, InvalidRatesError
from .kernels import Kernel
from .lattice import Configuration, coarse_density, neighbor_table, site_coords, coords_to_site
from .models import DIRECT, GRAPHICAL, ModelSpec, _hyp_pmf

__all__ = [
    "EventLog", "SiteEvents", "gen_log", "simulate_forward", "coarse_density",
]

_BLOCK = 64  # rows per stream draw; part of the reproducibility contract


class _SiteStream:
    """Sequential event generator for one (site, kind) Poisson stream.

    Draws blocks of (dt-uniform, mark-uniform[, reaction-uniform]) rows and
    turns them into event times by inverse-transform exponentials, so the
    n-th event is a fixed function of (seed, site, kind, n).
    """

    __slots__ = ("gen", "rate", "width", "t", "_times", "_marks", "_pos")

    def __init__(self, seed: int, site: int, kind: int, rate: float):
        self.gen = _rng.stream(seed, site, kind)
        self.rate = rate
        self.width = 3 if kind == _rng.REACTION_KIND else 2
        self.t = 0.0
        self._times = np.empty(0)
        self._marks = np.empty((0, self.width - 1))
        self._pos = 0

    def _extend(self):
        u = self.gen.random((_BLOCK, self.width))
        dts = -np.log1p(-u[:, 0]) / self.rate
        times = self.t + np.cumsum(dts)
        self.t = times[-1]
        keep = slice(self._pos, None)
        self._times = np.concatenate([self._times[keep], times])
        self._marks = np.concatenate([self._marks[keep], u[:, 1:]])
        self._pos = 0

    def take_until(self, t_end: float) -> tuple[np.ndarray, np.ndarray]:
        """Consume and return (times, mark-uniform rows) with time <= t_end."""
        while self.t <= t_end:
            self._extend()
        hi = self._pos + np.searchsorted(self._times[self._pos:], t_end, "right")
        times = self._times[self._pos:hi].copy()
        marks = self._marks[self._pos:hi].copy()
        self._pos = hi
        return times, marks


@dataclass
class SiteEvents:
    """Time-ordered events at one site: kind 0 = voter arrow, 1 = reaction."""

    times: np.ndarray    # float64, strictly increasing
    kinds: np.ndarray    # uint8
    marks: np.ndarray    # int64 atom index (kernel step or offspring vector)
    us: np.ndarray       # float64 thinning uniform, only meaningful for kind 1


class EventLog:
    """The graphical representation on a finite torus up to horizon T."""

    def __init__(self, model: ModelSpec, side: int, T: float, seed: int):
        if model.perturbation is None:
            raise InvalidRatesError("graphical log requires a g-form perturbation")
        if T < 0:
            raise ValueError("horizon must be non-negative")
        model.require_torus(side)
        self.model = model
        self.side = side
        self.dim = model.kernel.dim
        self.T = float(T)
        self.seed = int(seed)
        self.nsites = side ** self.dim
        self.voter_rate = model.voter_rate
        self.cstar = model.perturbation.cstar
        self._cache: dict[int, SiteEvents] = {}

    def site_events(self, x: int) -> SiteEvents:
        """All events at site x on [0, T], lazily generated and cached."""
        ev = self._cache.get(x)
        if ev is not None:
            return ev
        model = self.model
        vt, vm = _SiteStream(self.seed, x, _rng.VOTER_KIND,
                             self.voter_rate).take_until(self.T)
        rt, rm = _SiteStream(self.seed, x, _rng.REACTION_KIND,
                             self.cstar).take_until(self.T)
        vmark = np.searchsorted(model.kernel._cdf, vm[:, 0], "right")
        law = model.perturbation.offspring
        rmark = np.searchsorted(law._cdf, rm[:, 0], "right")
        times = np.concatenate([vt, rt])
        kinds = np.concatenate([np.zeros(len(vt), np.uint8),
                                np.ones(len(rt), np.uint8)])
        marks = np.concatenate([vmark, rmark]).astype(np.int64)
        us = np.concatenate([np.full(len(vt), -1.0), rm[:, 1]])
        order = np.argsort(times, kind="stable")
        ev = SiteEvents(times[order], kinds[order], marks[order], us[order])
        self._cache[x] = ev
        return ev

    def counts(self) -> tuple[int, int]:
        """(voter, reaction) event totals; materializes every site."""
        nv = nr = 0
        for x in range(self.nsites):
            ev = self.site_events(x)
            nr += int(ev.kinds.sum())
            nv += len(ev.kinds) - int(ev.kinds.sum())
        return nv, nr


def gen_log(model: ModelSpec, side: int, T: float, seed: int) -> EventLog:
    """The graphical representation; generation is lazy per site."""
    return EventLog(model, side, T, seed)


def _merged_chunk(streams_v, streams_r, t_end, kernel: Kernel, law,
                  dim: int, side: int):
    """Advance all per-site streams to t_end and return the global
    time-ordered event arrays for the window, with precomputed targets."""
    times_l, sites_l, kinds_l, mark_u = [], [], [], []
    for x, st in enumerate(streams_v):
        t, m = st.take_until(t_end)
        if len(t):
            times_l.append(t)
            sites_l.append(np.full(len(t), x, np.int64))
            kinds_l.append(np.zeros(len(t), np.uint8))
            mark_u.append(m)
    for x, st in enumerate(streams_r):
        t, m = st.take_until(t_end)
        if len(t):
            times_l.append(t)
            sites_l.append(np.full(len(t), x, np.int64))
            kinds_l.append(np.ones(len(t), np.uint8))
            mark_u.append(m)
    if not times_l:
        z = np.empty(0)
        return (z, np.empty(0, np.int64), np.empty(0, np.uint8),
                np.empty(0, np.int64), np.empty(0, np.int64),
                np.empty((0, 1), np.int64), np.empty(0))
    times = np.concatenate(times_l)
    sites = np.concatenate(sites_l)
    kinds = np.concatenate(kinds_l)
    umark = np.concatenate([m[:, 0] for m in mark_u])
    uextra = np.concatenate([m[:, 1] if m.shape[1] > 1 else np.full(len(m), -1.0)
                             for m in mark_u])
    order = np.lexsort((sites, times))
    times, sites, kinds, umark, uextra = (a[order] for a in
                                          (times, sites, kinds, umark, uextra))
    is_v = kinds == 0
    vtarget = np.zeros(len(times), np.int64)
    if is_v.any():
        vm = np.searchsorted(kernel._cdf, umark[is_v], "right")
        c = site_coords(sites[is_v], dim, side)
        vtarget[is_v] = coords_to_site(c + kernel.offsets[vm], side)
    ridx = np.full(len(times), -1, np.int64)
    n_r = int((~is_v).sum())
    if n_r:
        ridx[~is_v] = np.arange(n_r)
        rm = np.searchsorted(law._cdf, umark[~is_v], "right")
        vecs = law.vectors[rm]                      # (n_r, n0, d)
        c = site_coords(sites[~is_v], dim, side)    # (n_r, d)
        rsites = coords_to_site(c[:, None, :] + vecs, side)
        r_u = uextra[~is_v].copy()
    else:
        rsites = np.empty((0, law.n0), np.int64)
        r_u = np.empty(0)
    return times, sites, kinds, vtarget, ridx, rsites, r_u


def _simulate_graphical(model, xi0, T, seed, snapshot_times, density_times,
                        max_chunk_events):
    side, dim = xi0.side, xi0.dim
    nsites = xi0.nsites
    law = model.perturbation.offspring
    streams_v = [_SiteStream(seed, x, _rng.VOTER_KIND, model.voter_rate)
                 for x in range(nsites)]
    streams_r = [_SiteStream(seed, x, _rng.REACTION_KIND,
                             model.perturbation.cstar)
                 for x in range(nsites)]
    total_rate = nsites * (model.voter_rate + model.perturbation.cstar)
    max_dt = max(max_chunk_events / total_rate, 1e-9)
    breaks = sorted(set(float(t) for t in snapshot_times) | {T})
    edges = [0.0]
    for b in breaks:
        while b - edges[-1] > max_dt * 1.5:
            edges.append(edges[-1] + max_dt)
        if b > edges[-1]:
            edges.append(b)
    values = xi0.values.copy()
    ones = int(values.sum())
    snaps = []
    dens_times = np.asarray(sorted(density_times), dtype=np.float64)
    dens_out = np.full(len(dens_times), -1.0)
    g0, g1 = model.perturbation.g0, model.perturbation.g1
    cstar = model.perturbation.cstar
    snap_set = set(float(t) for t in snapshot_times)
    for t0, t1 in zip(edges[:-1], edges[1:]):
        (times, sites, kinds, vtarget, ridx, rsites, r_u) = _merged_chunk(
            streams_v, streams_r, t1, model.kernel, law, dim, side)
        ones = int(apply_graphical_events(
            values, times, kinds, sites.astype(np.int64), vtarget, ridx,
            np.ascontiguousarray(rsites), r_u, g0, g1, cstar, law.n0,
            dens_times, dens_out, ones))
        if t1 in snap_set:
            snaps.append((t1, Configuration(dim, side, values.copy())))
    dens_out[dens_out < 0] = ones / nsites
    return Configuration(dim, side, values), snaps, dens_out


def _nlv_rate_table(model) -> np.ndarray:
    k = model.kernel.n_atoms
    a = model.params["a"]
    lam = model.params["lam"]
    fv = model.full_voter_rate
    table = np.zeros((2, k + 1))
    for n1 in range(k + 1):
        h1 = (1 + lam) * sum(a[j - 1] * _hyp_pmf(j, n1, k, 4)
                             for j in range(1, 5))
        h0 = sum(a[j - 1] * _hyp_pmf(j, k - n1, k, 4) for j in range(1, 5))
        table[0, n1] = fv * (n1 / k) + h1
        table[1, n1] = fv * ((k - n1) / k) + h0
    return table


def _lv_rate_table(model) -> np.ndarray:
    k = model.kernel.n_atoms
    th0, th1 = model.params["theta0"], model.params["theta1"]
    fv = model.full_voter_rate
    table = np.zeros((2, k + 1))
    for n1 in range(k + 1):
        f1 = n1 / k
        f0 = 1.0 - f1
        table[0, n1] = fv * f1 + th0 * f1 * f1
        table[1, n1] = fv * f0 + th1 * f0 * f0
    if (table < 0).any():
        raise InvalidRatesError("negative direct rates; epsilon too large")
    return table


def _simulate_direct(model, xi0, T, seed, snapshot_times, density_times):
    if snapshot_times:
        raise ValueError("direct backend records densities, not snapshots")
    side, dim = xi0.side, xi0.dim
    nbrs = neighbor_table(model.kernel.offsets, dim, side)
    values = xi0.values.copy()
    n1 = values[nbrs].sum(axis=1).astype(np.int64)
    dens_times = np.asarray(sorted(density_times), dtype=np.float64)
    dens_out = np.full(len(dens_times), -1.0)
    run_seed = _rng.spawn_seed(seed, 0xD1EC7) % (2 ** 31 - 1)
    if model.family in ("lv", "voter"):
        table = _lv_rate_table(model)
        gillespie_table(values, n1, table, nbrs, float(T), run_seed,
                        dens_times, dens_out)
    elif model.family == "nlv":
        table = _nlv_rate_table(model)
        gillespie_table(values, n1, table, nbrs, float(T), run_seed,
                        dens_times, dens_out)
    elif model.family == "game":
        p = model.params
        from .models import two_step_offsets
        upd_offsets = two_step_offsets(model.kernel)
        update_sites = neighbor_table(upd_offsets, dim, side)
        gillespie_game(values, n1, nbrs, update_sites, p["w"], p["alpha"],
                       p["beta"], p["gamma"], p["delta"],
                       model.full_voter_rate, float(T), run_seed,
                       dens_times, dens_out)
    else:
        raise ValueError(f"no direct backend for family {model.family!r}")
    return Configuration(dim, side, values), [], dens_out


def simulate_forward(model: ModelSpec, xi0: Configuration, T: float, seed: int,
                     backend: str | None = None,
                     snapshot_times: tuple[float, ...] = (),
                     density_times: tuple[float, ...] = (),
                     max_chunk_events: int = 6_000_000):
    """Run the particle system to time T.

    Returns (final configuration, [(t, snapshot), ...], density samples).
    Deterministic given (model, xi0, T, seed, backend).
    """
    backend = backend or model.backend
    model.require_torus(xi0.side)
    if any(t > T for t in snapshot_times) or any(t > T for t in density_times):
        raise HorizonExceededError("snapshot/density times must be <= T")
    if backend == GRAPHICAL:
        return _simulate_graphical(model, xi0, T, seed, snapshot_times,
                                   density_times, max_chunk_events)
    if backend == DIRECT:
        return _simulate_direct(model, xi0, T, seed, snapshot_times,
                                density_times)
    raise ValueError(f"unknown backend {backend!r}")
