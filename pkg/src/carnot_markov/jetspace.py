"""Jet groups over the line and the dyadic bump function.

A point of the jet group of order r-1 is written (x; u_{r-1}, ..., u_0).
The coordinate u_i has dilation weight r - i, and x has weight 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import mpmath

from .piecewise import PiecewisePoly, nonnegative_on, poly_add, poly_affine, poly_degree, poly_eval

MAX_ORDER = 6


@dataclass(frozen=True)
class JetPoint:
    x: object
    u: tuple  # (u_{r-1}, ..., u_1, u_0)

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(self.u))
        if not self.u:
            raise ValueError("jet needs r >= 1 coordinates")

    @property
    def r(self) -> int:
        return len(self.u)

    def pi(self, i: int):
        """The u_i coordinate."""
        if not 0 <= i < self.r:
            raise IndexError(f"u_{i} outside 0..{self.r - 1}")
        return self.u[self.r - 1 - i]

    def __str__(self) -> str:
        return f"({self.x}; {', '.join(str(v) for v in self.u)})"


def identity(r: int) -> JetPoint:
    return JetPoint(Fraction(0), (Fraction(0),) * r)


def _check(p: JetPoint, q: JetPoint):
    if p.r != q.r:
        raise ValueError(f"jet orders differ: {p.r} vs {q.r}")


def jet_product(p: JetPoint, q: JetPoint) -> JetPoint:
    _check(p, q)
    r, y = p.r, q.x
    out = []
    for i in range(r - 1, -1, -1):
        v = p.pi(i) + q.pi(i)
        for j in range(i + 1, r):
            v += p.pi(j) * y ** (j - i) * Fraction(1, factorial(j - i))
        out.append(v)
    return JetPoint(p.x + q.x, tuple(out))


def jet_inverse(p: JetPoint) -> JetPoint:
    r, x = p.r, p.x
    w: dict[int, object] = {}
    for i in range(r - 1, -1, -1):
        v = -p.pi(i)
        for j in range(i + 1, r):
            v -= w[j] * x ** (j - i) * Fraction(1, factorial(j - i))
        w[i] = v
    return JetPoint(-x, tuple(w[i] for i in range(r - 1, -1, -1)))


def jet_dilate(t, p: JetPoint) -> JetPoint:
    if t <= 0:
        raise ValueError("dilation factor must be positive")
    r = p.r
    return JetPoint(t * p.x, tuple(t ** (r - i) * p.pi(i) for i in range(r - 1, -1, -1)))


def jet_of(f: PiecewisePoly, y, r: int | None = None) -> JetPoint:
    r = f.order if r is None else r
    lo, hi = f.domain
    if y < lo or y > hi:
        raise ValueError(f"{y} outside domain [{lo}, {hi}]")
    return JetPoint(y, tuple(f(y, deriv=i) for i in range(r - 1, -1, -1)))


def cc_upper(f: PiecewisePoly, a, b) -> Fraction:
    """(1 + sup |f^{(r)}| on [a, b]) * |b - a|."""
    lo, hi = f.domain
    a, b = min(a, b), max(a, b)
    if a < lo or b > hi:
        raise ValueError(f"[{a}, {b}] not inside [{lo}, {hi}]")
    if a == b:
        return Fraction(0)
    return (1 + f.sup_abs_derivative(f.order, a, b)) * (b - a)


def cc_lower_power(p: JetPoint, q: JetPoint):
    """|u_0(p) - u_0(q)|, the r-th power of the lower surrogate."""
    _check(p, q)
    if p.x != q.x:
        raise ValueError("surrogate needs equal x-coordinates")
    return abs(p.pi(0) - q.pi(0))


def cc_lower_surrogate(p: JetPoint, q: JetPoint, prec: int = 256):
    """|u_0(p) - u_0(q)|^{1/r}: a lower bound for the CC distance up to a fixed
    unknown constant (reported with that constant set to 1)."""
    v = cc_lower_power(p, q)
    r = p.r
    if r == 1 or v == 0:
        return v
    if isinstance(v, Fraction):
        with mpmath.workprec(prec):
            return mpmath.root(mpmath.mpf(v.numerator) / v.denominator, r)
    return float(v) ** (1.0 / r)


# ---------------------------------------------------------------------------
# the bump


def _reflect(phi: PiecewisePoly) -> PiecewisePoly:
    """phi(2x) on [0, 1/2] followed by -phi(2 - 2x) on [1/2, 1]."""
    bps = [b / 2 for b in phi.breakpoints]
    pieces = [poly_affine(p, 2, 0) for p in phi.pieces]
    n = len(phi.pieces)
    for k in range(n - 1, -1, -1):
        u = phi.breakpoints[k]
        bps.append(1 - u / 2)
        pieces.append(tuple(-c for c in poly_affine(phi.pieces[k], -2, 2)))
    return PiecewisePoly(tuple(bps), tuple(pieces), phi.order)


def _build(r: int) -> PiecewisePoly:
    phi = PiecewisePoly((Fraction(0), Fraction(1, 2), Fraction(1)),
                        ((Fraction(0), Fraction(2)), (Fraction(2), Fraction(-2))), 1)
    for k in range(1, r):
        phi = _reflect(phi).antiderivative().scale(Fraction(2) ** (k + 2))
    return phi


@dataclass(frozen=True)
class PhiReport:
    r: int
    symmetric: bool
    dominates: bool
    zero_jets: bool
    constant_top_derivative: bool
    smooth: bool
    max_at_center: bool
    witness: object = None

    @property
    def ok(self) -> bool:
        return all((self.symmetric, self.dominates, self.zero_jets,
                    self.constant_top_derivative, self.smooth, self.max_at_center))


def verify_phi(phi: PiecewisePoly, r: int) -> PhiReport:
    witness = []
    half = Fraction(1, 2)
    bps = phi.breakpoints

    # (1) phi(x) = phi(1 - x): compare each piece with its mirror as polynomials
    symmetric = bps == tuple(1 - b for b in reversed(bps))
    if symmetric:
        n = len(phi.pieces)
        for k, p in enumerate(phi.pieces):
            if poly_affine(phi.pieces[n - 1 - k], -1, 1) != p:
                symmetric = False
                witness.append(("symmetry", k))
                break

    # (2) phi(x) >= (2x)^r on [0, 1/2]
    dominates = True
    power = (Fraction(0),) * r + (Fraction(2) ** r,)
    grid = Fraction(1, 2 ** (r + 2))
    for k, p in enumerate(phi.pieces):
        a, b = bps[k], min(bps[k + 1], half)
        if a >= half:
            break
        g = poly_add(p, tuple(-c for c in power))
        x = a
        while x <= b:
            if poly_eval(g, x) < 0:
                dominates = False
                witness.append(("domination", x))
            x += grid
        ok, where = nonnegative_on(g, a, b)
        if ok is not True:
            dominates = False
            witness.append(("domination", where))

    # (3) zero jets at both ends
    zero_jets = all(phi(Fraction(0), i) == 0 and phi(Fraction(1), i) == 0 for i in range(r))

    # (4) the r-th derivative is constant on each [i 2^-r, (i+1) 2^-r)
    dyadic = Fraction(1, 2 ** r)
    constant_top = all(poly_degree(p) <= r for p in phi.pieces) and all(
        (b / dyadic).denominator == 1 for b in bps)

    defect = phi.smoothness_defect(r - 1)
    if defect is not None:
        witness.append(("smoothness", defect))

    top = phi(half)
    max_at_center = True
    for k, p in enumerate(phi.pieces):
        ok, where = nonnegative_on(tuple(-c for c in poly_add(p, (-top,))), bps[k], bps[k + 1])
        if ok is not True:
            max_at_center = False
            witness.append(("maximum", where))
    return PhiReport(r, symmetric, dominates, zero_jets, constant_top, defect is None,
                     max_at_center, tuple(witness) or None)


_PHI_CACHE: dict[int, PiecewisePoly] = {}


def build_phi(r: int, verify: bool = True) -> PiecewisePoly:
    """The bump on [0, 1]: symmetric, C^{r-1}, zero (r-1)-jets at 0 and 1,
    above (2x)^r on [0, 1/2], with r-th derivative constant on dyadic
    intervals of length 2^{-r}."""
    if not 1 <= r <= MAX_ORDER:
        raise ValueError(f"r must lie in 1..{MAX_ORDER}")
    if r not in _PHI_CACHE:
        phi = _build(r)
        if verify:
            rep = verify_phi(phi, r)
            if not rep.ok:
                raise AssertionError(f"bump construction failed its checks: {rep}")
        _PHI_CACHE[r] = phi
    return _PHI_CACHE[r]
