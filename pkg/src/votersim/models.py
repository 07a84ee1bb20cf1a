"""Voter model perturbation specifications.

A model is rapid voter dynamics plus an O(1) perturbation given in
"g-form": an offspring law q of (Y^1..Y^N0) and non-negative tables g0, g1
on {0,1}^N0, thinned by the constant cstar.  Builders are provided for the
three concrete families (Lotka-Volterra competition, death-birth evolutionary
game, nonlinear voter), plus the generic reduction of an arbitrary bounded
finite-range perturbation to non-negative g tables.

Table indexing is bit-packed little-endian: bit j of the index is the spin
at x + Y^{j+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EpsilonTooLargeError,
    InvalidRatesError,
    KernelNotCoveredError,
    NegativeFitnessError,
    NegativeRateError,
    SelectionTooStrongError,
    TorusTooSmallError,
)
from .kernels import (
    Kernel,
    OffspringLaw,
    box_kernel,
    deterministic_law,
    independent_pair_law,
    validate,
    without_replacement_law,
)
from .lattice import Configuration, shift_sites

GRAPHICAL = "graphical"
DIRECT = "direct"


def pattern_bits(values: Sequence[int]) -> int:
    """Little-endian bit-pack of a 0/1 vector."""
    out = 0
    for j, v in enumerate(values):
        out |= (int(v) & 1) << j
    return out


@dataclass(frozen=True)
class PerturbationSpec:
    """Offspring law q plus non-negative reaction tables and thinning bound."""

    offspring: OffspringLaw
    g0: np.ndarray     # (2**n0,) float64
    g1: np.ndarray
    cstar: float

    def __post_init__(self):
        n0 = self.offspring.n0
        g0 = np.ascontiguousarray(np.asarray(self.g0, dtype=np.float64))
        g1 = np.ascontiguousarray(np.asarray(self.g1, dtype=np.float64))
        if g0.shape != (1 << n0,) or g1.shape != (1 << n0,):
            raise ValueError(f"g tables must have 2**{n0} entries")
        if (g0 < 0).any() or (g1 < 0).any():
            raise InvalidRatesError("g tables must be non-negative")
        if self.cstar < g1.max() + g0.max() + 1:
            raise InvalidRatesError("cstar must be >= max(g1) + max(g0) + 1")
        object.__setattr__(self, "g0", g0)
        object.__setattr__(self, "g1", g1)

    @property
    def n0(self) -> int:
        return self.offspring.n0

    @property
    def staydead(self) -> bool:
        """All-zeros is a trap iff g1(0,...,0) = 0."""
        return self.g1[0] == 0.0


def _cstar(g0: np.ndarray, g1: np.ndarray) -> float:
    return float(np.max(g1) + np.max(g0) + 1.0)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A concrete voter model perturbation ready for simulation.

    voter_rate is the walk rate of the graphical backend, i.e. eps^-2 minus
    the eps1^-2 absorbed into the g tables; the direct backend runs the exact
    CTMC at full rate eps^-2 with the family's closed-form rates.
    """

    kernel: Kernel
    epsilon: float
    voter_rate: float
    perturbation: PerturbationSpec | None
    backend: str
    family: str
    params: dict = field(default_factory=dict)
    eps1_inv2: float = 0.0

    def __post_init__(self):
        if self.voter_rate <= 0:
            raise EpsilonTooLargeError("voter rate must be positive")
        if self.backend not in (GRAPHICAL, DIRECT):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def full_voter_rate(self) -> float:
        return self.voter_rate + self.eps1_inv2

    @property
    def interaction_range(self) -> int:
        r = self.kernel.range
        if self.perturbation is not None:
            r = max(r, self.perturbation.offspring.range)
        if self.family == "game":
            r = max(r, 2 * self.kernel.range)
        return r

    def require_torus(self, side: int) -> None:
        if side <= 2 * self.interaction_range:
            raise TorusTooSmallError(
                f"torus side {side} must exceed twice the interaction range "
                f"{self.interaction_range}"
            )


def local_density(model: ModelSpec, config: Configuration, x: int, i: int) -> float:
    """Kernel-weighted density f_i of type i around flat site x."""
    if config.side <= 2 * model.kernel.range:
        raise TorusTooSmallError("kernel range must be below half the torus side")
    sites = shift_sites(x, model.kernel.offsets, config.dim, config.side)
    hit = (config.values[sites] == i)
    return float(np.dot(model.kernel.weights_float, hit))


def expected_g(model: ModelSpec, config: Configuration, x: int, i: int) -> float:
    """Exact expectation of g_i over the offspring law at site x."""
    pert = model.perturbation
    if pert is None:
        raise ValueError("model has no g-form perturbation")
    law = pert.offspring
    table = pert.g1 if i == 1 else pert.g0
    # patterns for all atoms at once: bits over the offspring slots
    flat = law.vectors.reshape(-1, law.dim)
    sites = shift_sites(x, flat, config.dim, config.side).reshape(law.n_atoms, law.n0)
    bits = config.values[sites].astype(np.int64)
    idx = (bits << np.arange(law.n0, dtype=np.int64)).sum(axis=1)
    return float(np.dot(law.probs, table[idx]))


def _hyp_pmf(j: int, good: int, total: int, draws: int) -> float:
    return (math.comb(good, j) * math.comb(total - good, draws - j)
            / math.comb(total, draws))


def direct_h(model: ModelSpec, config: Configuration, x: int, i: int) -> float:
    """Closed-form perturbation h_i(x, xi) for the direct backend."""
    p = model.params
    if model.family == "lv":
        fi = local_density(model, config, x, i)
        theta = p["theta1"] if i == 0 else p["theta0"]
        return theta * fi * fi
    if model.family == "nlv":
        k = model.kernel.n_atoms
        sites = shift_sites(x, model.kernel.offsets, config.dim, config.side)
        n1 = int(config.values[sites].sum())
        a = p["a"]
        good = n1 if i == 1 else k - n1
        h = sum(a[j - 1] * _hyp_pmf(j, good, k, 4) for j in range(1, 5))
        return h * (1.0 + p["lam"]) if i == 1 else h
    if model.family == "voter":
        return 0.0
    raise ValueError(f"no separable closed form for family {model.family!r}")


def game_rates(model: ModelSpec, config: Configuration, x: int) -> tuple[float, float]:
    """Exact death-birth rates (r_0, r_1) at site x for the game family."""
    p = model.params
    w = p["w"]
    alpha, beta, gamma, delta = p["alpha"], p["beta"], p["gamma"], p["delta"]
    nbrs = shift_sites(x, model.kernel.offsets, config.dim, config.side)
    num = [0.0, 0.0]
    den = 0.0
    for y in nbrs:
        ynbrs = shift_sites(int(y), model.kernel.offsets, config.dim, config.side)
        n1 = int(config.values[ynbrs].sum())
        n0 = len(ynbrs) - n1
        if config.values[y] == 1:
            rho = 1.0 - w + w * (alpha * n1 + beta * n0)
            num[1] += rho
        else:
            rho = 1.0 - w + w * (gamma * n1 + delta * n0)
            num[0] += rho
        den += rho
    if den <= 0:
        raise NegativeFitnessError("total neighbor fitness vanished")
    return num[0] / den, num[1] / den


def flip_rate(model: ModelSpec, config: Configuration, x: int,
              backend: str | None = None) -> float:
    """Total flip rate at site x under the requested backend."""
    backend = backend or model.backend
    xi = int(config.values[x])
    f_other = local_density(model, config, x, 1 - xi)
    if backend == GRAPHICAL:
        rate = model.voter_rate * f_other + expected_g(model, config, x, 1 - xi)
    elif model.family == "game":
        r0, r1 = game_rates(model, config, x)
        rate = model.full_voter_rate * (r1 if xi == 0 else r0)
    else:
        rate = (model.full_voter_rate * f_other
                + direct_h(model, config, x, 1 - xi))
    if rate < 0:
        raise NegativeRateError(f"negative flip rate {rate} at site {x}")
    return rate


# ---------------------------------------------------------------------------
# builders

def build_lv(theta0: float, theta1: float, epsilon: float, k: Kernel,
             backend: str = GRAPHICAL) -> ModelSpec:
    """Lotka-Volterra competition at alpha_i = 1 + eps^2 theta_i.

    The g tables absorb an eps1^-2 voter correction with
    eps1^-2 = max(theta0^-, theta1^-) + 1, the smallest shift with unit margin
    keeping both tables non-negative.
    """
    validate(k)
    eps1_inv2 = max(max(-theta0, 0.0), max(-theta1, 0.0)) + 1.0
    inv2 = epsilon ** -2
    if inv2 <= eps1_inv2:
        raise EpsilonTooLargeError(
            f"need eps^-2 > {eps1_inv2}, got {inv2}")
    g = {0: np.zeros(4), 1: np.zeros(4)}
    for i in (0, 1):
        theta_other = theta1 if i == 0 else theta0
        for eta1 in (0, 1):
            for eta2 in (0, 1):
                val = eps1_inv2 * eta1 * (1 - eta2)
                if eta1 == eta2 == i:
                    val += eps1_inv2 + theta_other
                g[i][pattern_bits((eta1, eta2))] = val
    pert = PerturbationSpec(independent_pair_law(k), g[0], g[1],
                            _cstar(g[0], g[1]))
    return ModelSpec(kernel=k, epsilon=epsilon, voter_rate=inv2 - eps1_inv2,
                     perturbation=pert, backend=backend, family="lv",
                     params={"theta0": theta0, "theta1": theta1},
                     eps1_inv2=eps1_inv2)


def pure_voter(epsilon: float, k: Kernel) -> ModelSpec:
    """Plain voter model at rate eps^-2 (no perturbation events at all)."""
    validate(k)
    law = independent_pair_law(k)
    zero = np.zeros(4)
    pert = PerturbationSpec(law, zero, zero, 1.0)
    return ModelSpec(kernel=k, epsilon=epsilon, voter_rate=epsilon ** -2,
                     perturbation=pert, backend=GRAPHICAL, family="voter")


def two_step_offsets(k: Kernel) -> np.ndarray:
    """[0] + N + (N+N), deduplicated, for the game's dependence neighborhood."""
    d = k.dim
    seen = {tuple([0] * d)}
    out = [tuple([0] * d)]
    for off in k.offsets:
        t = tuple(int(c) for c in off)
        if t not in seen:
            seen.add(t)
            out.append(t)
    for a in k.offsets:
        for b in k.offsets:
            t = tuple(int(c) for c in a + b)
            if t not in seen:
                seen.add(t)
                out.append(t)
    return np.array(out, dtype=np.int64)


def game_h_hat(k: Kernel, alpha: float, beta: float, gamma: float,
               delta: float) -> tuple[np.ndarray, Callable[[Sequence[int]], float]]:
    """Limiting perturbation h1_hat of the game as a function of the local
    pattern over two_step_offsets(k); h0_hat = -h1_hat."""
    offs = two_step_offsets(k)
    index = {tuple(int(c) for c in o): j for j, o in enumerate(offs)}
    kdeg = k.n_atoms
    nbr_slots = [index[tuple(int(c) for c in o)] for o in k.offsets]
    second_slots = [[index[tuple(int(c) for c in (a + b))] for b in k.offsets]
                    for a in k.offsets]

    def h1(bits: Sequence[int]) -> float:
        f1 = sum(bits[s] for s in nbr_slots) / kdeg
        f0 = 1.0 - f1
        f1_2 = 0.0
        f0_2 = 0.0
        for j, s in enumerate(nbr_slots):
            inner1 = sum(bits[t] for t in second_slots[j])
            if bits[s]:
                f1_2 += inner1
            else:
                f0_2 += kdeg - inner1
        f1_2 /= kdeg * kdeg
        f0_2 /= kdeg * kdeg
        h0 = ((gamma - beta) * kdeg * f0 * f1 + kdeg * (delta - gamma) * f0_2
              - kdeg * f0 * ((alpha - beta) * f1_2 + (delta - gamma) * f0_2))
        return -h0

    return offs, h1


def tabulate_h_hat(offs: np.ndarray, h1: Callable[[Sequence[int]], float],
                   max_bits: int = 16) -> tuple[np.ndarray, np.ndarray] | None:
    """Dense (h0_hat, h1_hat) tables, or None when 2**n0 would be too large."""
    n0 = offs.shape[0]
    if n0 > max_bits:
        return None
    size = 1 << n0
    h1_tab = np.empty(size)
    bits = [0] * n0
    for idx in range(size):
        for j in range(n0):
            bits[j] = (idx >> j) & 1
        h1_tab[idx] = h1(bits)
    return -h1_tab, h1_tab


def build_evolution_game(alpha: float, beta: float, gamma: float, delta: float,
                         k: Kernel, w: float) -> ModelSpec:
    """Death-birth updating with payoff matrix ((alpha, beta), (gamma, delta)),
    selection strength w = eps^2, on the uniform neighborhood graph of k."""
    validate(k)
    if not k.is_uniform:
        raise InvalidRatesError("game requires a uniform neighborhood kernel")
    kdeg = k.n_atoms
    big_r = 2 * kdeg * (1 + abs(alpha) + abs(beta) + abs(gamma) + abs(delta))
    if not 0 < w < 1.0 / (2 * big_r):
        raise SelectionTooStrongError(
            f"need 0 < w < {1.0 / (2 * big_r):.6g}, got {w}")
    worst = min(alpha * n + beta * (kdeg - n) for n in range(kdeg + 1))
    worst = min(worst, min(gamma * n + delta * (kdeg - n) for n in range(kdeg + 1)))
    if 1.0 - w + w * worst <= 0:
        raise NegativeFitnessError("fitness must stay positive at every site")
    offs, h1 = game_h_hat(k, alpha, beta, gamma, delta)
    tables = tabulate_h_hat(offs, h1)
    params = {"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta,
              "w": w, "kdeg": kdeg, "h_offsets": offs, "h1_hat_fn": h1,
              "h_tables": tables}
    return ModelSpec(kernel=k, epsilon=math.sqrt(w), voter_rate=1.0 / w,
                     perturbation=None, backend=DIRECT, family="game",
                     params=params)


def build_cooperation_game(b: float, c: float, k: Kernel, w: float) -> ModelSpec:
    """The benefit/cost special case with payoff ((b-c, -c), (b, 0))."""
    return build_evolution_game(b - c, -c, b, 0.0, k, w)


def build_nlv(a: Sequence[float], L: int, lam: float, epsilon: float,
              d: int = 3, backend: str = GRAPHICAL) -> ModelSpec:
    """Continuous-time nonlinear voter model with flip rates a(1..4) by
    disagreeing-count among 4 neighbors sampled without replacement from the
    box neighborhood of radius L; g1 tilted by (1 + lam)."""
    a = tuple(float(v) for v in a)
    if len(a) != 4 or any(v < 0 for v in a):
        raise InvalidRatesError("need four non-negative rates a(1..4)")
    if lam < 0:
        raise InvalidRatesError("lambda must be >= 0")
    if lam > 0 and sum(a) == 0:
        raise InvalidRatesError("sum(a) must be positive when lambda > 0")
    k = box_kernel(d, L)
    if k.n_atoms < 4:
        raise InvalidRatesError("neighborhood too small to draw 4 distinct points")
    law = without_replacement_law(k.offsets, 4)
    size = 1 << 4
    g1 = np.empty(size)
    g0 = np.empty(size)
    a_of = lambda j: 0.0 if j == 0 else a[j - 1]
    for idx in range(size):
        s = bin(idx).count("1")
        g1[idx] = (1.0 + lam) * a_of(s)
        g0[idx] = a_of(4 - s)
    pert = PerturbationSpec(law, g0, g1, _cstar(g0, g1))
    return ModelSpec(kernel=k, epsilon=epsilon, voter_rate=epsilon ** -2,
                     perturbation=pert, backend=backend, family="nlv",
                     params={"a": a, "L": L, "lam": lam})


def gform_from_h(h0_hat: np.ndarray, h1_hat: np.ndarray, offsets: np.ndarray,
                 k: Kernel) -> tuple[PerturbationSpec, float]:
    """Non-negative g tables representing finite-range perturbation tables
    h_hat_i over fixed offsets (y_1=0, y_2, ..., y_N0).

    Returns the spec together with the eps1^-2 shift used, chosen as
    max|h_hat| / min-support-weight so non-negativity holds with equality in
    the boundary case.  Round trip: E_q g_i - eps1^-2 f_i reproduces h_hat_i
    exactly on every pattern whose spin at the origin is 1-i (the only
    patterns that enter the flip rates); values on the remaining patterns are
    kept when already non-negative and clipped to zero otherwise.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    n0 = offsets.shape[0]
    h0_hat = np.asarray(h0_hat, dtype=np.float64)
    h1_hat = np.asarray(h1_hat, dtype=np.float64)
    if h0_hat.shape != (1 << n0,) or h1_hat.shape != (1 << n0,):
        raise ValueError(f"tables must have 2**{n0} entries")
    if np.any(offsets[0] != 0):
        raise ValueError("first offset must be the origin")
    slot_of = {tuple(int(c) for c in o): j for j, o in enumerate(offsets)}
    p_at_slot = np.zeros(n0)
    for off, w in zip(k.offsets, k.weights_float):
        key = tuple(int(c) for c in off)
        if key not in slot_of:
            raise KernelNotCoveredError(f"kernel offset {key} not in offsets")
        p_at_slot[slot_of[key]] = w
    p_min = min(w for w in k.weights_float)
    m_bound = max(np.abs(h0_hat).max(), np.abs(h1_hat).max())
    eps1_inv2 = m_bound / p_min
    size = 1 << n0
    bits = ((np.arange(size)[:, None] >> np.arange(n0)[None, :]) & 1)
    base1 = eps1_inv2 * (bits * p_at_slot[None, :]).sum(axis=1)
    base0 = eps1_inv2 * ((1 - bits) * p_at_slot[None, :]).sum(axis=1)
    g1 = base1 + h1_hat
    g0 = base0 + h0_hat
    for g, i in ((g0, 0), (g1, 1)):
        wrong_spin = bits[:, 0] == i
        neg = g < 0
        bad = neg & ~wrong_spin
        if bad.any():
            raise InvalidRatesError(
                "h tables imply negative total rates; not a valid perturbation")
        # rate-irrelevant patterns may be clipped without changing the model
        g[neg & wrong_spin] = (base0 if i == 0 else base1)[neg & wrong_spin]
    pert = PerturbationSpec(deterministic_law(offsets), g0, g1, _cstar(g0, g1))
    return pert, eps1_inv2


def model_from_gform(pert: PerturbationSpec, eps1_inv2: float, epsilon: float,
                     k: Kernel, family: str = "custom",
                     params: dict | None = None) -> ModelSpec:
    """Wrap a g-form perturbation as a runnable graphical-backend model."""
    inv2 = epsilon ** -2
    if inv2 <= eps1_inv2:
        raise EpsilonTooLargeError(f"need eps^-2 > {eps1_inv2}, got {inv2}")
    return ModelSpec(kernel=k, epsilon=epsilon, voter_rate=inv2 - eps1_inv2,
                     perturbation=pert, backend=GRAPHICAL, family=family,
                     params=params or {}, eps1_inv2=eps1_inv2)
