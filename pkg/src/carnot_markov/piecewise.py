"""Exact piecewise polynomials on rational breakpoints.

Each piece stores monomial coefficients ``(c_0, c_1, ...)`` in the global
variable x.  Lookup is half-open ``[b_k, b_{k+1})`` except on the last piece,
which is closed.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

from .algebra import as_fraction, fraction_str

Poly = tuple[Fraction, ...]


# ---------------------------------------------------------------------------
# single polynomials


def _trim(p: Sequence) -> Poly:
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return tuple(p) if p else (Fraction(0),)


def poly_eval(p: Poly, x):
    acc = 0 * x
    for c in reversed(p):
        acc = acc * x + c
    return acc


def poly_deriv(p: Poly, k: int = 1) -> Poly:
    for _ in range(k):
        p = _trim([j * p[j] for j in range(1, len(p))])
    return p


def poly_integ(p: Poly) -> Poly:
    return _trim([Fraction(0)] + [c / (j + 1) for j, c in enumerate(p)])


def poly_add(p: Poly, q: Poly) -> Poly:
    n = max(len(p), len(q))
    return _trim([(p[j] if j < len(p) else 0) + (q[j] if j < len(q) else 0) for j in range(n)])


def poly_scale(p: Poly, c) -> Poly:
    return _trim([c * v for v in p])


def poly_affine(p: Poly, alpha, beta) -> Poly:
    """Coefficients of x -> p(alpha x + beta)."""
    out = [Fraction(0)] * len(p)
    for j, c in enumerate(p):
        if c == 0:
            continue
        for k in range(j + 1):
            out[k] += c * comb(j, k) * alpha ** k * beta ** (j - k)
    return _trim(out)


def poly_degree(p: Poly) -> int:
    return len(_trim(p)) - 1


def _bernstein(p: Poly) -> list[Fraction]:
    d = len(p) - 1
    return [sum(Fraction(comb(k, j), comb(d, j)) * p[j] for j in range(k + 1)) for k in range(d + 1)]


def nonnegative_on(p: Poly, lo: Fraction, hi: Fraction, depth: int = 40):
    """Exact certificate that p >= 0 on [lo, hi].

    Returns (True, None) when certified, (False, x) with a rational x where
    p(x) < 0, or (None, (lo, hi)) if subdivision ran out of depth.
    """
    stack = [(Fraction(lo), Fraction(hi), 0)]
    while stack:
        a, b, level = stack.pop()
        h = poly_affine(p, b - a, a)
        coeffs = _bernstein(h)
        if all(c >= 0 for c in coeffs):
            continue
        for x in (a, b, (a + b) / 2):
            if poly_eval(p, x) < 0:
                return False, x
        if level >= depth:
            return None, (a, b)
        mid = (a + b) / 2
        stack.append((a, mid, level + 1))
        stack.append((mid, b, level + 1))
    return True, None


# ---------------------------------------------------------------------------
# piecewise


@dataclass(frozen=True)
class PiecewisePoly:
    breakpoints: tuple[Fraction, ...]
    pieces: tuple[Poly, ...]
    order: int = 1  # r: the function is C^{r-1} with piecewise-constant r-th derivative

    def __post_init__(self):
        bps = tuple(as_fraction(b) for b in self.breakpoints)
        if len(bps) != len(self.pieces) + 1 or not self.pieces:
            raise ValueError("need one more breakpoint than pieces")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must increase")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", tuple(_trim([as_fraction(c) for c in p]) for p in self.pieces))

    @property
    def domain(self) -> tuple[Fraction, Fraction]:
        return self.breakpoints[0], self.breakpoints[-1]

    def piece_index(self, x) -> int:
        lo, hi = self.domain
        if x < lo or x > hi:
            raise ValueError(f"{x} outside domain [{lo}, {hi}]")
        return min(bisect_right(self.breakpoints, x) - 1, len(self.pieces) - 1)

    def __call__(self, x, deriv: int = 0):
        p = self.pieces[self.piece_index(x)]
        return poly_eval(poly_deriv(p, deriv) if deriv else p, x)

    def derivative_table(self, upto: int) -> tuple[tuple[Poly, ...], ...]:
        """table[k][i] = k-th derivative of piece i."""
        return tuple(tuple(poly_deriv(p, k) for p in self.pieces) for k in range(upto + 1))

    def _map(self, fn) -> "PiecewisePoly":
        return PiecewisePoly(self.breakpoints, tuple(fn(p) for p in self.pieces), self.order)

    def scale(self, c) -> "PiecewisePoly":
        return self._map(lambda p: poly_scale(p, c))

    def __neg__(self) -> "PiecewisePoly":
        return self.scale(Fraction(-1))

    def __add__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        if self.domain != other.domain:
            raise ValueError("domains differ")
        bps = sorted(set(self.breakpoints) | set(other.breakpoints))
        pieces = []
        for a, b in zip(bps, bps[1:]):
            mid = (a + b) / 2
            pieces.append(poly_add(self.pieces[self.piece_index(mid)],
                                   other.pieces[other.piece_index(mid)]))
        return PiecewisePoly(tuple(bps), tuple(pieces), min(self.order, other.order))

    def derivative(self, k: int = 1) -> "PiecewisePoly":
        return PiecewisePoly(self.breakpoints, self.pieces, self.order)._map(lambda p: poly_deriv(p, k))

    def antiderivative(self) -> "PiecewisePoly":
        """Continuous antiderivative vanishing at the left endpoint."""
        pieces, value = [], Fraction(0)
        for (a, b), p in zip(zip(self.breakpoints, self.breakpoints[1:]), self.pieces):
            q = poly_integ(p)
            q = poly_add(q, (value - poly_eval(q, a),))
            pieces.append(q)
            value = poly_eval(q, b)
        return PiecewisePoly(self.breakpoints, tuple(pieces), self.order + 1)

    def rescale_domain(self, factor) -> "PiecewisePoly":
        """x -> f(x / factor) on the domain stretched by ``factor``."""
        factor = as_fraction(factor)
        return PiecewisePoly(tuple(b * factor for b in self.breakpoints),
                             tuple(poly_affine(p, 1 / factor, Fraction(0)) for p in self.pieces),
                             self.order)

    def max_degree(self) -> int:
        return max(poly_degree(p) for p in self.pieces)

    def sup_abs_derivative(self, k: int, a=None, b=None) -> Fraction:
        """Exact sup of |f^{(k)}| over pieces meeting (a, b) in positive length,
        valid when f^{(k)} is piecewise constant."""
        lo, hi = self.domain
        a = lo if a is None else a
        b = hi if b is None else b
        best = Fraction(0)
        for (u, v), p in zip(zip(self.breakpoints, self.breakpoints[1:]), self.pieces):
            if min(v, b) <= max(u, a):
                continue
            d = poly_deriv(p, k)
            if poly_degree(d) > 0:
                raise ValueError(f"derivative of order {k} is not piecewise constant")
            best = max(best, abs(d[0]))
        return best

    def smoothness_defect(self, upto: int):
        """First interior breakpoint where some derivative of order <= upto jumps."""
        for k in range(1, len(self.pieces)):
            x = self.breakpoints[k]
            left, right = self.pieces[k - 1], self.pieces[k]
            for d in range(upto + 1):
                if poly_eval(poly_deriv(left, d), x) != poly_eval(poly_deriv(right, d), x):
                    return x, d
        return None

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "breakpoints": [fraction_str(b) for b in self.breakpoints],
            "pieces": [[fraction_str(c) for c in p] for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewisePoly":
        return cls(tuple(as_fraction(b) for b in d["breakpoints"]),
                   tuple(tuple(as_fraction(c) for c in p) for p in d["pieces"]),
                   int(d.get("order", 1)))

