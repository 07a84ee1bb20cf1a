"""Hot loops, compiled with numba when available.

Every function here is plain positional-array code so the pure-Python
fallback (used only if numba is missing) runs the identical source.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    def _jit(fn):
        return njit(cache=True)(fn)
except Exception:  # pragma: no cover - numba is a declared dependency
    def _jit(fn):
        return fn


def _apply_graphical_events(values, ev_time, ev_kind, ev_site, ev_vtarget,
                            ev_ridx, r_sites, r_u, g0, g1, cstar, n0,
                            sample_times, out_density, ones):
    """Apply one time-sorted block of graphical events in place.

    Voter event: copy the spin at the arrow target.  Reaction event: flip iff
    u * cstar < g_{1-i}(pattern).  Densities are recorded the first time the
    event clock passes each sample time.  Returns the updated ones-count.
    """
    nsites = values.shape[0]
    nsamp = sample_times.shape[0]
    si = 0
    for si in range(nsamp):
        if out_density[si] >= 0.0:
            continue
        break
    for e in range(ev_kind.shape[0]):
        t = ev_time[e]
        while si < nsamp and sample_times[si] < t:
            if out_density[si] < 0.0:
                out_density[si] = ones / nsites
            si += 1
        x = ev_site[e]
        old = values[x]
        if ev_kind[e] == 0:
            new = values[ev_vtarget[e]]
            values[x] = new
            ones += new - old
        else:
            r = ev_ridx[e]
            pat = 0
            for j in range(n0):
                pat += values[r_sites[r, j]] << j
            if old == 0:
                g = g1[pat]
            else:
                g = g0[pat]
            if r_u[r] * cstar < g:
                values[x] = 1 - old
                ones += 1 - 2 * old
    return ones


apply_graphical_events = _jit(_apply_graphical_events)


@_jit
def _fenwick_build(rates, tree):
    n = rates.shape[0]
    for i in range(n):
        tree[i] = 0.0
    for i in range(n):
        j = i
        v = rates[i]
        while j < n:
            tree[j] += v
            j |= j + 1
    return


@_jit
def _fenwick_add(tree, i, delta):
    n = tree.shape[0]
    j = i
    while j < n:
        tree[j] += delta
        j |= j + 1
    return


@_jit
def _fenwick_find(tree, target):
    # smallest index with prefix sum > target
    n = tree.shape[0]
    pos = -1
    step = 1
    while step * 2 <= n:
        step *= 2
    acc = 0.0
    while step > 0:
        nxt = pos + step
        if nxt < n and acc + tree[nxt] <= target:
            acc += tree[nxt]
            pos = nxt
        step //= 2
    return pos + 1


def _gillespie_table(values, n1, rate_table, nbrs, t_end, seed,
                     sample_times, out_density):
    """Exact CTMC where the flip rate at x is rate_table[spin, ones-count].

    Covers Lotka-Volterra and nonlinear-voter direct backends on uniform
    neighborhoods.  n1 holds the per-site count of type-1 neighbors and is
    maintained incrementally.
    """
    np.random.seed(seed)
    nsites = values.shape[0]
    k = nbrs.shape[1]
    rates = np.empty(nsites)
    for x in range(nsites):
        rates[x] = rate_table[values[x], n1[x]]
    tree = np.empty(nsites)
    _fenwick_build(rates, tree)
    total = 0.0
    for x in range(nsites):
        total += rates[x]
    ones = 0
    for x in range(nsites):
        ones += values[x]
    t = 0.0
    si = 0
    nsamp = sample_times.shape[0]
    while True:
        if total <= 1e-12:
            t = t_end
        else:
            t += -np.log(np.random.random()) / total
        while si < nsamp and sample_times[si] < t:
            out_density[si] = ones / nsites
            si += 1
        if t >= t_end:
            break
        x = _fenwick_find(tree, np.random.random() * total)
        old = values[x]
        new = 1 - old
        values[x] = new
        ones += new - old
        dn = new - old
        delta = rate_table[new, n1[x]] - rates[x]
        rates[x] += delta
        _fenwick_add(tree, x, delta)
        total += delta
        for j in range(k):
            y = nbrs[x, j]
            n1[y] += dn
            delta = rate_table[values[y], n1[y]] - rates[y]
            if delta != 0.0:
                rates[y] += delta
                _fenwick_add(tree, y, delta)
                total += delta
    while si < nsamp:
        out_density[si] = ones / nsites
        si += 1
    return ones


gillespie_table = _jit(_gillespie_table)


@_jit
def _game_site_rate(values, n1, x, nbrs, w, alpha, beta, gamma, delta, fv):
    k = nbrs.shape[1]
    num = 0.0
    den = 0.0
    spin = values[x]
    for j in range(k):
        y = nbrs[x, j]
        m1 = n1[y]
        m0 = k - m1
        if values[y] == 1:
            rho = 1.0 - w + w * (alpha * m1 + beta * m0)
            if spin == 0:
                num += rho
        else:
            rho = 1.0 - w + w * (gamma * m1 + delta * m0)
            if spin == 1:
                num += rho
        den += rho
    return fv * num / den


def _gillespie_game(values, n1, nbrs, update_sites, w, alpha, beta, gamma,
                    delta, fv, t_end, seed, sample_times, out_density):
    """Exact CTMC for the death-birth game at full rate fv = 1/w."""
    np.random.seed(seed)
    nsites = values.shape[0]
    k = nbrs.shape[1]
    rates = np.empty(nsites)
    for x in range(nsites):
        rates[x] = _game_site_rate(values, n1, x, nbrs, w, alpha, beta,
                                   gamma, delta, fv)
    tree = np.empty(nsites)
    _fenwick_build(rates, tree)
    total = 0.0
    for x in range(nsites):
        total += rates[x]
    ones = 0
    for x in range(nsites):
        ones += values[x]
    t = 0.0
    si = 0
    nsamp = sample_times.shape[0]
    nupd = update_sites.shape[1]
    while True:
        if total <= 1e-12:
            t = t_end
        else:
            t += -np.log(np.random.random()) / total
        while si < nsamp and sample_times[si] < t:
            out_density[si] = ones / nsites
            si += 1
        if t >= t_end:
            break
        x = _fenwick_find(tree, np.random.random() * total)
        old = values[x]
        new = 1 - old
        values[x] = new
        ones += new - old
        dn = new - old
        for j in range(k):
            n1[nbrs[x, j]] += dn
        for j in range(nupd):
            y = update_sites[x, j]
            nr = _game_site_rate(values, n1, y, nbrs, w, alpha, beta,
                                 gamma, delta, fv)
            delta_r = nr - rates[y]
            if delta_r != 0.0:
                rates[y] = nr
                _fenwick_add(tree, y, delta_r)
                total += delta_r
    while si < nsamp:
        out_density[si] = ones / nsites
        si += 1
    return ones


gillespie_game = _jit(_gillespie_game)


def _bbm_constant_v(nsamples, g0, g1, cstar, part_cells, part_sizes, part_cdf,
                    v, t_end, seed, max_events):
    """Branching-tree computation-process samples with constant leaf law.

    Positions are irrelevant when the initial profile is constant, so only
    the branching structure, partitions, uniforms and Bernoulli leaves are
    simulated.  Returns (number of ones, samples actually used).
    """
    np.random.seed(seed)
    n0 = part_cells.shape[1] - 1
    npart = part_cdf.shape[0]
    ev_parent = np.empty(max_events, dtype=np.int64)
    ev_pidx = np.empty(max_events, dtype=np.int64)
    ev_u = np.empty(max_events)
    ev_child0 = np.empty(max_events, dtype=np.int64)
    live = np.empty(1 + max_events * n0, dtype=np.int64)
    value = np.empty(1 + max_events * n0, dtype=np.int8)
    cell_child = np.empty(n0 + 1, dtype=np.int64)
    ones = 0
    used = 0
    for s in range(nsamples):
        nlive = 1
        live[0] = 0
        nparticles = 1
        nev = 0
        t = 0.0
        overflow = False
        while True:
            t += -np.log(np.random.random()) / (cstar * nlive)
            if t >= t_end:
                break
            if nev >= max_events:
                overflow = True
                break
            parent = live[int(np.random.random() * nlive)]
            u = np.random.random()
            pidx = 0
            lo = 0
            hi = npart
            while lo < hi:
                mid = (lo + hi) // 2
                if part_cdf[mid] <= u:
                    lo = mid + 1
                else:
                    hi = mid
            pidx = lo
            ev_parent[nev] = parent
            ev_pidx[nev] = pidx
            ev_u[nev] = np.random.random()
            ev_child0[nev] = nparticles
            # one live child per cell not containing element 0
            ncells = part_sizes[pidx]
            for c in range(1, ncells):
                live[nlive] = nparticles + c - 1
                nlive += 1
            nparticles += ncells - 1
            nev += 1
        if overflow:
            continue
        used += 1
        for j in range(nlive):
            value[live[j]] = 1 if np.random.random() < v else 0
        for e in range(nev - 1, -1, -1):
            parent = ev_parent[e]
            pidx = ev_pidx[e]
            i = value[parent]
            # cell c >= 1 maps to child particle ev_child0 + c - 1
            for c in range(part_sizes[pidx]):
                if c == 0:
                    cell_child[0] = parent
                else:
                    cell_child[c] = ev_child0[e] + c - 1
            pat = 0
            for j in range(n0):
                cell = part_cells[pidx, j + 1]
                pat += value[cell_child[cell]] << j
            if i == 0:
                g = g1[pat]
            else:
                g = g0[pat]
            if ev_u[e] * cstar < g:
                value[parent] = 1 - i
        ones += value[0]
    return ones, used


bbm_constant_v = _jit(_bbm_constant_v)
