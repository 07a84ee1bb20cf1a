"""Reaction polynomials: closed forms for the three model families,
polynomial utilities over exact rationals, and phase classifiers.

Coefficients are ascending in u.  Closed forms are exact when the inputs
are rational; Monte Carlo coalescence probabilities enter as floats and the
resulting coefficients carry propagated standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import (
    DegenerateSumError,
    IdenticallyZeroError,
    NonSimpleRootError,
)

Coeffs = tuple

R1, R2, R3, R4, R5 = "R1", "R2", "R3", "R4", "R5"
BOUNDARY = "boundary"
COOPERATORS, DEFECTORS = "cooperators", "defectors"
CASE1, CASE2, CASE3, CASE4A, CASE4B = "case1", "case2", "case3", "case4A", "case4B"


# --------------------------------------------------------------------------
# polynomial arithmetic (exact on Fractions, fine on floats)

def _trim(c: Sequence) -> list:
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return c


def poly_eval(c: Sequence, u):
    acc = 0
    for v in reversed(list(c)):
        acc = acc * u + v
    return acc


def poly_add(a: Sequence, b: Sequence) -> list:
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
            for i in range(n)]


def poly_scale(a: Sequence, s) -> list:
    return [s * v for v in a]


def poly_mul(a: Sequence, b: Sequence) -> list:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def poly_pow(a: Sequence, k: int) -> list:
    out = [1]
    for _ in range(k):
        out = poly_mul(out, a)
    return out


def poly_derivative(c: Sequence) -> list:
    return _trim([i * c[i] for i in range(1, len(c))]) if len(c) > 1 else [0]


def poly_antiderivative(c: Sequence) -> list:
    return [0] + [Fraction(v) / (i + 1) if isinstance(v, (int, Fraction))
                  else v / (i + 1) for i, v in enumerate(c)]


def poly_definite_integral(c: Sequence, a, b):
    anti = poly_antiderivative(c)
    return poly_eval(anti, b) - poly_eval(anti, a)


def _poly_divmod(a: list, b: list) -> tuple[list, list]:
    a = [Fraction(v) for v in a]
    b = [Fraction(v) for v in b]
    q = [Fraction(0)] * max(1, len(a) - len(b) + 1)
    while len(a) >= len(b) and any(a):
        if a[-1] == 0:
            a.pop()
            continue
        shift = len(a) - len(b)
        factor = a[-1] / b[-1]
        q[shift] = factor
        for i in range(len(b)):
            a[shift + i] -= factor * b[i]
        a.pop()
    return _trim(q), _trim(a or [Fraction(0)])


def _poly_gcd(a: list, b: list) -> list:
    a, b = _trim([Fraction(v) for v in a]), _trim([Fraction(v) for v in b])
    while any(v != 0 for v in b):
        _, r = _poly_divmod(a, b)
        a, b = b, _trim(r)
    if all(v == 0 for v in a):
        return [Fraction(0)]
    lead = a[-1]
    return [v / lead for v in a]


def _sturm_chain(c: list) -> list[list]:
    chain = [_trim(c), poly_derivative(c)]
    while len(chain[-1]) > 1 or chain[-1][0] != 0:
        _, r = _poly_divmod(chain[-2], chain[-1])
        r = _trim([-v for v in r])
        if all(v == 0 for v in r):
            break
        chain.append(r)
    return chain


def _sign_changes(chain: list[list], x) -> int:
    signs = []
    for p in chain:
        v = poly_eval(p, x)
        if v != 0:
            signs.append(1 if v > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def sturm_count(c: Sequence, a, b) -> int:
    """Number of distinct real roots in (a, b] for a squarefree-ish chain."""
    chain = _sturm_chain([Fraction(v) for v in c])
    return _sign_changes(chain, Fraction(a)) - _sign_changes(chain, Fraction(b))


def roots_in_unit_interval(c: Sequence, tol: float = 1e-12) -> list[float]:
    """Sorted simple roots of the polynomial in the open interval (0, 1).

    Sturm-guided subdivision isolates the roots, bisection refines them to
    `tol`.  Raises IdenticallyZeroError on the zero polynomial and
    NonSimpleRootError when a multiple root lies inside (0, 1).
    """
    f = _trim([Fraction(v) for v in c])
    if all(v == 0 for v in f):
        raise IdenticallyZeroError("polynomial is identically zero")
    # deflate endpoint roots so the open interval is a clean Sturm query
    while poly_eval(f, Fraction(0)) == 0:
        f = _trim(f[1:])
    while poly_eval(f, Fraction(1)) == 0:
        q, r = _poly_divmod(f, [Fraction(-1), Fraction(1)])
        assert all(v == 0 for v in r)
        f = _trim(q)
    if len(f) == 1:
        return []
    g = _poly_gcd(f, poly_derivative(f))
    if len(g) > 1:
        if sturm_count(g, 0, 1) > 0 or poly_eval(g, Fraction(1, 2)) == 0:
            raise NonSimpleRootError("multiple root inside (0, 1)")
        f, _ = _poly_divmod(f, g)
    chain = _sturm_chain(f)

    def count(a: Fraction, b: Fraction) -> int:
        return _sign_changes(chain, a) - _sign_changes(chain, b)

    intervals = [(Fraction(0), Fraction(1))]
    isolated: list[tuple[Fraction, Fraction]] = []
    while intervals:
        a, b = intervals.pop()
        k = count(a, b)
        if k == 0:
            continue
        if k == 1:
            isolated.append((a, b))
            continue
        mid = (a + b) / 2
        if poly_eval(f, mid) == 0:
            isolated.append((mid, mid))
            eps = (b - a) / 1024
            intervals.append((a, mid - eps))
            intervals.append((mid + eps, b))
            continue
        intervals.append((a, mid))
        intervals.append((mid, b))
    roots = []
    for a, b in isolated:
        if a == b:
            roots.append(float(a))
            continue
        lo, hi = float(a), float(b)
        flo = float(poly_eval(f, Fraction(a)))
        if flo == 0.0:
            roots.append(lo)
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = float(poly_eval(f, mid))
            if fm == 0.0:
                lo = hi = mid
                break
            if (fm > 0) == (flo > 0):
                lo = mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return sorted(roots)


# --------------------------------------------------------------------------
# the reaction polynomial object

@dataclass(frozen=True)
class ReactionPolynomial:
    """f(u) = sum coeffs[i] u^i; exact rationals or floats with stderr."""

    coeffs: Coeffs
    stderr: Coeffs | None = None
    provenance: str = "closed-form"
    fprime0: tuple[float, float] | None = None   # dedicated MC estimate

    @property
    def degree(self) -> int:
        return len(_trim(list(self.coeffs))) - 1

    def __call__(self, u):
        return poly_eval(self.coeffs, u)

    def derivative(self) -> "ReactionPolynomial":
        return ReactionPolynomial(tuple(poly_derivative(list(self.coeffs))),
                                  provenance=self.provenance)

    def definite_integral(self, a=0, b=1):
        return poly_definite_integral(self.coeffs, a, b)

    def roots(self, tol: float = 1e-12) -> list[float]:
        return roots_in_unit_interval(self.coeffs, tol)

    def as_floats(self) -> list[float]:
        return [float(v) for v in self.coeffs]

    def endpoint_signs_ok(self, tol: float = 1e-12) -> bool:
        """f(0) >= 0 and f(1) <= 0, the sign constraint of a valid perturbation."""
        return (float(self(0)) >= -tol) and (float(self(1)) <= tol)


def _sign(x, tol: float = 1e-9) -> int:
    """Sign with exact zero on rationals and a tolerance on floats."""
    if isinstance(x, (int, Fraction)):
        return (x > 0) - (x < 0)
    if abs(x) <= tol:
        return 0
    return 1 if x > 0 else -1


def _exactify(*vals):
    """Promote ints to Fractions so mixed arithmetic stays exact."""
    return tuple(Fraction(v) if isinstance(v, int) else v for v in vals)


# --------------------------------------------------------------------------
# Lotka-Volterra

def lv_f(theta0, theta1, p2, p3) -> ReactionPolynomial:
    """f(u) = u(1-u)[theta0 p2 - theta1 (p2+p3) + u p3 (theta0+theta1)]."""
    theta0, theta1, p2, p3 = _exactify(theta0, theta1, p2, p3)
    a = theta0 * p2 - theta1 * (p2 + p3)
    b = p3 * (theta0 + theta1)
    coeffs = poly_mul([0, 1, -1], [a, b])     # u(1-u) * (a + b u)
    return ReactionPolynomial(tuple(coeffs))


def lv_ustar(theta0, theta1, p2, p3):
    """Interior zero of the LV reaction polynomial, or None if outside (0,1)."""
    theta0, theta1, p2, p3 = _exactify(theta0, theta1, p2, p3)
    if theta0 + theta1 == 0:
        if theta0 == 0:
            return None
        raise DegenerateSumError(
            "theta0 + theta1 = 0: linear part has no interior zero")
    u = (theta1 * (p2 + p3) - theta0 * p2) / (p3 * (theta1 + theta0))
    return u if 0 < u < 1 else None


def lv_phase(theta0, theta1, m0) -> str:
    """Five-sector classification of the LV phase plane near the voter point.

    Sector boundaries are the lines theta1 = m0 theta0 (f'(0) = 0),
    theta1 = theta0 / m0 (f'(1) = 0) and, inside the bistable cone, the
    symmetry diagonal theta1 = theta0.
    """
    theta0, theta1, m0 = _exactify(theta0, theta1, m0)
    s0 = _sign(m0 * theta0 - theta1)        # > 0 iff f'(0) > 0
    s1 = _sign(theta0 / m0 - theta1)        # > 0 iff f'(1) < 0
    if s0 == 0 or s1 == 0:
        return BOUNDARY
    if s0 > 0 and s1 > 0:
        return R3
    if s0 < 0 and s1 < 0:
        return R2
    if s0 > 0 and s1 < 0:
        return R1
    sd = _sign(theta1 - theta0)
    if sd == 0:
        return BOUNDARY
    return R4 if sd > 0 else R5


# --------------------------------------------------------------------------
# evolution of cooperation

def coop_f(alpha, beta, gamma, delta, k_deg: int, p01, p122, p123
           ) -> ReactionPolynomial:
    """Cubic reaction polynomial of the death-birth game.

    p01 = p(0|e1), p122 = p(e1|e2, e2+e3), p123 = p(e1|e2|e2+e3).
    """
    alpha, beta, gamma, delta, p01, p122, p123 = _exactify(
        alpha, beta, gamma, delta, p01, p122, p123)
    c_quad = (k_deg * (beta - delta) + (gamma - delta)) * p01
    c_cross = k_deg * ((alpha - beta) - (gamma - delta))
    u1u = [0, 1, -1]
    coeffs = poly_add(poly_scale(u1u, c_quad),
                      poly_scale(poly_mul(u1u, [p122, p123]), c_cross))
    return ReactionPolynomial(tuple(coeffs))


def coop_rule(b, c, k_deg: int) -> str:
    """Benefit/cost rule: cooperators win iff b/c > k."""
    if c <= 0 or b < 0:
        raise ValueError("need b >= 0 and c > 0")
    s = _sign(_exactify(b)[0] - _exactify(c)[0] * k_deg)
    if s > 0:
        return COOPERATORS
    if s < 0:
        return DEFECTORS
    return BOUNDARY


# --------------------------------------------------------------------------
# nonlinear voter

def nlv_b1b2(a: Sequence) -> tuple:
    a1, a2, a3, a4 = _exactify(*a)
    return 4 * a1 - a4, 6 * a2 - 4 * a3


def _nlv_poly(c1, c2, c3, c4) -> list:
    """c1 u(1-u)^4 + c2 u^2(1-u)^3 + c3 u^3(1-u)^2 + c4 u^4(1-u)."""
    u = [0, 1]
    one_u = [1, -1]
    out = [0]
    for j, cc in enumerate((c1, c2, c3, c4), start=1):
        out = poly_add(out, poly_scale(poly_mul(poly_pow(u, j),
                                                poly_pow(one_u, 5 - j)), cc))
    return out


def nlv_f1(a: Sequence) -> tuple[ReactionPolynomial, object, object]:
    """Leading (large-neighborhood) quintic of the nonlinear voter model.

    Returns (f1, b1, b2) with b1 = 4a(1) - a(4), b2 = 6a(2) - 4a(3).
    """
    b1, b2 = nlv_b1b2(a)
    return ReactionPolynomial(tuple(_nlv_poly(b1, b2, -b2, -b1))), b1, b2


def nlv_flambda(a: Sequence, lam) -> ReactionPolynomial:
    """The tilted quintic when g1 is scaled by (1 + lambda)."""
    a1, a2, a3, a4 = _exactify(*a)
    lam = _exactify(lam)[0]
    b1, b2 = nlv_b1b2(a)
    return ReactionPolynomial(tuple(_nlv_poly(
        b1 + 4 * lam * a1, b2 + 6 * lam * a2,
        -(b2 - 4 * lam * a3), -(b1 - lam * a4))))


def nlv_phase(b1, b2) -> str:
    """Quadrant classification by the signs of f1'(0) = b1 and
    f1'(1/2) = -(6 b1 + 2 b2)/16, with the 5b1+b2 line splitting case 4."""
    b1, b2 = _exactify(b1, b2)
    s0 = _sign(b1)
    sh = _sign(-(3 * b1 + b2))              # sign of f1'(1/2)
    if s0 == 0 or sh == 0:
        return BOUNDARY
    if s0 > 0:
        return CASE1 if sh < 0 else CASE2
    if sh > 0:
        return CASE3
    si = _sign(5 * b1 + b2)
    if si == 0:
        return BOUNDARY
    return CASE4A if si > 0 else CASE4B
