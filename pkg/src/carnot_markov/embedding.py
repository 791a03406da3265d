"""Maps from the recursive graphs into the jet group.

Level m carries the bump ``phi~_m(x) = w_m * B_m(x)`` with the irrational
weight ``w_m = 1 / (sqrt(m) ln(m + 1))`` and the exact rational part
``B_m(x) = 2^{r N_m} phi(2^{-N_m} x)``.  A vertex at time t is sent to the
jet whose derivative stack is

    sum over levels l in the chain of t of  s_l * w_l * B_l^{(i)}(tau_l),

where tau_l is the local time inside the level-l copy and s_l is the product
of the signs chosen at levels m, ..., l.  Rational per-level stacks are kept
exact and the weights are applied in 256-bit (interval) arithmetic.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product as iproduct

import mpmath
import numpy as np

from .graphs import (GraphSchedule, VertexAddress, Walk, build_schedule, ceil_2log2, chain,
                     chain_arrays, vertices_at)
from .jetspace import JetPoint, build_phi
from .piecewise import PiecewisePoly, poly_affine, poly_deriv

PREC = 256


def _mp(v) -> mpmath.mpf:
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def level_weight(m: int) -> mpmath.mpf:
    with mpmath.workprec(PREC):
        return 1 / (mpmath.sqrt(m) * mpmath.log(m + 1))


def k_bound(r: int, N: list[int] | tuple[int, ...]) -> mpmath.mpf:
    """Recursive bound K_m on the size of u_0 over level m = len(N) - 1."""
    peak = build_phi(r)(Fraction(1, 2))
    with mpmath.workprec(PREC):
        K = mpmath.mpf(0)
        for j in range(1, len(N)):
            K += mpmath.mpf(2) ** (r * N[j]) * _mp(peak) * level_weight(j)
        return K


def k_condition_rhs(r: int, m: int, n_next: int) -> mpmath.mpf:
    """2^{r (N_{m+1} - ceil(2 log2 (m+1)) - 1) - 1} / (sqrt(m+1) ln(m+2))."""
    c = ceil_2log2(m + 1)
    with mpmath.workprec(PREC):
        return mpmath.mpf(2) ** (r * (n_next - c - 1) - 1) * level_weight(m + 1)


def k_condition_holds(r: int, N_prefix, n_next: int) -> bool:
    m = len(N_prefix) - 1
    return k_bound(r, N_prefix) <= k_condition_rhs(r, m, n_next)


@dataclass(frozen=True, eq=False)
class EmbeddingFamily:
    r: int
    schedule: GraphSchedule
    phi: PiecewisePoly
    bumps: tuple  # bumps[m] = B_m on [0, 2^{N_m}]; bumps[0] is None
    K: tuple      # K[m] as mpf

    @property
    def M(self) -> int:
        return self.schedule.M

    def weight(self, m: int) -> mpmath.mpf:
        return level_weight(m)

    def weight_float(self, m: int) -> float:
        return float(level_weight(m))

    def phi_r_sup(self) -> Fraction:
        return self.phi.sup_abs_derivative(self.r)

    def bump_sup(self, m: int) -> mpmath.mpf:
        """sup of phi~_m, attained at the midpoint."""
        with mpmath.workprec(PREC):
            return _mp(self.bumps[m](Fraction(self.schedule.length(m), 2))) * level_weight(m)

    def stack(self, level: int, tau) -> tuple[Fraction, ...]:
        """(B^{(0)}, ..., B^{(r)}) at local time tau, exact."""
        return _stack(self, level, Fraction(tau))


@lru_cache(maxsize=None)
def _derivs(fam: EmbeddingFamily, level: int):
    return fam.bumps[level].derivative_table(fam.r)


@lru_cache(maxsize=1 << 18)
def _stack(fam: EmbeddingFamily, level: int, tau: Fraction) -> tuple[Fraction, ...]:
    B = fam.bumps[level]
    k = B.piece_index(tau)
    table = _derivs(fam, level)
    out = []
    for d in range(fam.r + 1):
        p = table[d][k]
        acc = Fraction(0)
        for c in reversed(p):
            acc = acc * tau + c
        out.append(acc)
    return tuple(out)


def build_embedding(r: int, M: int) -> EmbeddingFamily:
    if not 1 <= r <= 6:
        raise ValueError("r must lie in 1..6")
    S = build_schedule(M, "embedding", r)
    phi = build_phi(r)
    bumps = [None]
    for m in range(1, M + 1):
        B = phi.rescale_domain(S.length(m)).scale(Fraction(2) ** (r * S.N[m]))
        # the r-th derivative must be constant on unit intervals
        if any(b.denominator != 1 for b in B.breakpoints):
            raise ValueError(f"level {m}: N_m < r")
        bumps.append(B)
    K = tuple(k_bound(r, S.N[: m + 1]) for m in range(M + 1))
    for m in range(M):
        if not K[m] <= k_condition_rhs(r, m, S.N[m + 1]):
            raise AssertionError(f"level bound fails at m = {m}")
    return EmbeddingFamily(r, S, phi, tuple(bumps), K)


# ---------------------------------------------------------------------------
# evaluation


def vertex_terms(fam: EmbeddingFamily, v: VertexAddress) -> list[tuple[int, int, tuple[Fraction, ...]]]:
    """(level, sign product, exact rational stack) for each level of the chain."""
    if v.m > fam.M:
        raise ValueError(f"level {v.m} beyond the family's {fam.M}")
    out, prod = [], 1
    for lv, (sgn, _) in zip(chain(fam.schedule, v.m, v.t), v.nesting):
        prod *= sgn
        out.append((lv.level, prod, fam.stack(lv.level, lv.tau)))
    return out


@contextmanager
def _precision(ctx):
    """Run at PREC bits; the interval context has no workprec manager."""
    ctx = mpmath.mp if ctx is mpmath else ctx
    saved = ctx.prec
    ctx.prec = PREC
    try:
        yield
    finally:
        ctx.prec = saved


def combine(fam: EmbeddingFamily, terms, index: int, ctx=mpmath):
    """sum_l s_l w_l B_l^{(index)} in 256-bit arithmetic (``ctx`` may be mpmath.iv)."""
    with _precision(ctx):
        total = ctx.mpf(0)
        for level, sgn, stack in terms:
            if stack[index]:
                w = 1 / (ctx.sqrt(level) * ctx.log(level + 1))
                total += sgn * w * ctx.mpf(stack[index].numerator) / stack[index].denominator
        return total


def eval_F(fam: EmbeddingFamily, v: VertexAddress) -> JetPoint:
    """Jet image of a vertex: x = t and u_i from the summed level stacks."""
    terms = vertex_terms(fam, v)
    u = tuple(combine(fam, terms, i) for i in range(fam.r - 1, -1, -1))
    return JetPoint(Fraction(v.t), u)


def path_terms(fam: EmbeddingFamily, m: int, t, sign_of, prefer: str = "left"):
    """Like vertex_terms, but for a whole path: copies on closed intervals, so
    endpoint levels contribute too.  ``sign_of(level, origin)`` gives the path's
    sign for a copy; ``prefer`` picks the copy at a junction."""
    S = fam.schedule
    out, prod = [], 1
    level, tau, origin = m, Fraction(t), 0
    while level >= 1:
        prod *= sign_of(level, origin)
        out.append((level, prod, fam.stack(level, tau)))
        a, A, sub = S.a(level), S.A(level), S.length(level - 1)
        rel = tau - a
        if prefer == "left":
            if not 0 < rel <= A * sub:
                break
            i = int(-(-rel // sub))
        else:
            if not 0 <= rel < A * sub:
                break
            i = int(rel // sub) + 1
        origin = origin + a + (i - 1) * sub
        tau = rel - (i - 1) * sub
        level -= 1
    return out


def _exact_stack_sum(terms, r: int) -> dict[int, tuple[Fraction, ...]]:
    """Per-level signed rational stacks (levels with zero stacks dropped)."""
    out = {}
    for level, sgn, stack in terms:
        if any(stack[:r]):
            out[level] = tuple(sgn * v for v in stack[:r])
    return out


@dataclass(frozen=True)
class EndpointReport:
    m: int
    patterns: int
    ok: bool
    boundary_times: int
    witness: object = None


def check_endpoints(fam: EmbeddingFamily, m: int) -> EndpointReport:
    """Zero jets at the source and sink for every sign pattern, and agreement
    of both parameterizations at every copy junction, exactly."""
    S = fam.schedule
    r = fam.r
    L = S.length(m)
    patterns = 0
    for signs in iproduct((1, -1), repeat=m):
        def sign_of(level, origin, signs=signs):
            return signs[m - level]
        for t in (0, L):
            patterns += 1
            if _exact_stack_sum(path_terms(fam, m, t, sign_of), r):
                return EndpointReport(m, patterns, False, 0, ("endpoint", t, signs))
    junctions = _junction_times(S, m)
    for t in junctions:
        for signs in iproduct((1, -1), repeat=m):
            def sign_of(level, origin, signs=signs):
                return signs[m - level]
            left = _exact_stack_sum(path_terms(fam, m, t, sign_of, "left"), r)
            right = _exact_stack_sum(path_terms(fam, m, t, sign_of, "right"), r)
            if left != right:
                return EndpointReport(m, patterns, False, len(junctions), ("junction", t, signs))
    return EndpointReport(m, patterns, True, len(junctions))


def _junction_times(S: GraphSchedule, m: int) -> list[int]:
    """Global times where two segments of some copy meet, over all copies."""
    out: set[int] = set()

    def walk(level: int, origin: int):
        if level < 1:
            return
        a, A, sub = S.a(level), S.A(level), S.length(level - 1)
        out.update(origin + a + i * sub for i in range(A + 1))
        for i in range(A):
            walk(level - 1, origin + a + i * sub)

    walk(m, 0)
    return sorted(out)


# ---------------------------------------------------------------------------
# separation


@dataclass(frozen=True)
class SeparationReport:
    m: int
    r: int
    mode: str
    pairs: int
    rechecked: int
    passed: bool
    min_ratio: float  # min of sqrt(m) ln(m+1) |d u_0| / d^r
    min_slack: float
    witness: tuple | None


def _ratio_interval(fam, m, terms1, terms2, d):
    iv = mpmath.iv
    with _precision(iv):
        diff = combine(fam, terms1, 0, iv) - combine(fam, terms2, 0, iv)
        scale = iv.sqrt(m) * iv.log(m + 1)
        return scale * abs(diff) - iv.mpf(d) ** fam.r


def check_separation(fam: EmbeddingFamily, m: int, mode: str = "exhaustive",
                     samples: int = 10_000, seed: int = 0) -> SeparationReport:
    """Check sqrt(m) ln(m+1) |u_0(F(q1)) - u_0(F(q2))| >= d(q1, q2)^r over vertical pairs.

    Pairs are screened in float64; any pair within 1e-9 relative of the
    boundary is re-decided with 256-bit interval arithmetic.
    """
    S = fam.schedule
    r = fam.r
    if not 1 <= m <= fam.M:
        raise ValueError("level out of range")
    L = S.length(m)
    if mode == "exhaustive":
        times = np.arange(1, L)
    elif mode == "sampled":
        times = np.random.default_rng(seed).integers(1, L, size=samples)
    else:
        raise ValueError("mode must be exhaustive or sampled")
    with mpmath.workprec(PREC):
        scale = float(mpmath.sqrt(m) * mpmath.log(m + 1))
    weights = np.array([fam.weight_float(level) for level in range(m, 0, -1)])
    lengths = np.array([S.length(level) for level in range(m, 0, -1)], dtype=float)

    pairs = rechecked = 0
    best = (np.inf, np.inf, None)
    by_depth: dict[int, list[tuple[int, list]]] = {}
    for t in times.tolist():
        levels = chain(S, m, t)
        by_depth.setdefault(len(levels), []).append((t, levels))
    for D, items in sorted(by_depth.items()):
        if D == 0:
            continue
        vals = np.array([[float(fam.stack(lv.level, lv.tau)[0]) for lv in levels] for _, levels in items])
        widths = np.array([[2 * min(lv.tau, S.length(lv.level) - lv.tau) for lv in levels]
                           for _, levels in items], dtype=float)
        signs = np.array(list(iproduct((1, -1), repeat=D)), dtype=float)
        prods = np.cumprod(signs, axis=1)
        terms = vals * weights[:D]
        for i, j in combinations(range(len(signs)), 2):
            first = int(np.argmax(signs[i] != signs[j]))
            d = widths[:, first]
            # levels above `first` cancel exactly, so only the rest enter
            delta = prods[i] - prods[j]
            lhs = scale * np.abs(terms @ delta)
            rhs = d ** r
            slack = lhs - rhs
            tol = 1e-9 * (scale * np.abs(terms) @ np.abs(delta) + rhs)
            pairs += len(items)
            ratio = lhs / rhs
            k = int(np.argmin(ratio))
            if ratio[k] < best[0]:
                best = (float(ratio[k]), float(slack[k]), (items[k][0], tuple(signs[i]), tuple(signs[j])))
            for idx in np.nonzero(slack <= tol)[0]:
                rechecked += 1
                t, levels = items[idx]
                v1 = _make(S, m, t, signs[i], levels)
                v2 = _make(S, m, t, signs[j], levels)
                iv = _ratio_interval(fam, m, vertex_terms(fam, v1), vertex_terms(fam, v2), d[idx])
                if iv.a < 0:
                    return SeparationReport(m, r, mode, pairs, rechecked, False, float(ratio[idx]),
                                            float(slack[idx]), (v1.serialize(), v2.serialize()))
    witness = None
    if best[2] is not None:
        t, s1, s2 = best[2]
        levels = chain(S, m, t)
        witness = (_make(S, m, t, s1, levels).serialize(), _make(S, m, t, s2, levels).serialize())
    return SeparationReport(m, r, mode, pairs, rechecked, True, best[0], best[1], witness)


def _make(S, m, t, signs, levels) -> VertexAddress:
    return VertexAddress(m, int(t), tuple((int(s), lv.copy) for s, lv in zip(signs, levels)))


# ---------------------------------------------------------------------------
# derivative bounds along walks


def step_terms(fam: EmbeddingFamily, walk: Walk, t: int):
    """(level, sign product, B_l^{(r)}) on the edge (t, t+1) of the walk."""
    out, prod = [], 1
    for lv, sgn in walk.step_chain(t):
        prod *= sgn
        out.append((lv.level, prod, fam.stack(lv.level, lv.tau)[fam.r]))
    return out


def phi_r_bound_on_step(fam: EmbeddingFamily, walk: Walk, t: int) -> mpmath.mpf:
    """|r-th derivative of the walk's path function| on [t, t+1]; constant there."""
    if not 0 <= t < fam.schedule.length(walk.m):
        raise ValueError("t out of range")
    with mpmath.workprec(PREC):
        total = mpmath.mpf(0)
        for level, sgn, val in step_terms(fam, walk, t):
            total += sgn * level_weight(level) * _mp(val)
        return abs(total)


def path_piece(fam: EmbeddingFamily, walk: Walk, t: int, weights=None) -> PiecewisePoly:
    """The walk's path function on [t, t+1] with rational stand-ins for the
    level weights (``weights[level]``, default a 1e-30 rational approximation)."""
    S = fam.schedule
    total = None
    for lv, sgn_prod in _signed_levels(walk, Fraction(2 * t + 1, 2)):
        B = fam.bumps[lv.level]
        w = weights[lv.level] if weights else _rational(level_weight(lv.level))
        k = B.piece_index(lv.tau)
        # B at local time x - origin
        poly = tuple(c * w * sgn_prod for c in poly_affine(B.pieces[k], 1, -Fraction(lv.origin)))
        piece = PiecewisePoly((Fraction(t), Fraction(t + 1)), (poly,), fam.r)
        total = piece if total is None else total + piece
    if total is None:
        total = PiecewisePoly((Fraction(t), Fraction(t + 1)), ((Fraction(0),),), fam.r)
    return total


def _rational(v: mpmath.mpf, bits: int = 128) -> Fraction:
    with mpmath.workprec(PREC):
        return Fraction(int(mpmath.nint(v * 2 ** bits)), 2 ** bits)


def _signed_levels(walk: Walk, t):
    prod = 1
    for lv in chain(walk.S, walk.m, t):
        prod *= walk.sign(lv.level, lv.origin)
        yield lv, prod


@dataclass(frozen=True)
class DerivativeBoundReport:
    m: int
    walks: int
    steps: int
    bound: float
    max_value: float
    passed: bool


def _level_tables(fam: EmbeddingFamily, m: int):
    """Float piece tables of the r-th derivative for levels m..1."""
    out = []
    for level in range(m, 0, -1):
        B = fam.bumps[level]
        bps = np.array([float(b) for b in B.breakpoints])
        top = np.array([float(poly_deriv(p, fam.r)[0]) for p in B.pieces])
        out.append((bps, top))
    return out


def top_derivative_values(fam: EmbeddingFamily, m: int, C) -> np.ndarray:
    """B_l^{(r)}(tau) for every chain entry (0 where the level is absent)."""
    vals = np.zeros_like(C.tau)
    for j, (bps, top) in enumerate(_level_tables(fam, m)):
        idx = np.clip(np.searchsorted(bps, C.tau[:, j], side="right") - 1, 0, len(top) - 1)
        vals[:, j] = np.where(C.valid[:, j], top[idx], 0.0)
    return vals


def check_derivative_bound(fam: EmbeddingFamily, m: int, walks: int = 10_000, seed: int = 0,
                           steps_per_walk: int = 64) -> DerivativeBoundReport:
    """Check |phi_gamma^{(r)}| <= 2 sqrt(m) sup|phi^{(r)}| on sampled walk steps.

    Each walk is an independent sign assignment; it is inspected on every
    step when the level has at most 1024 steps and on ``steps_per_walk``
    uniformly drawn steps otherwise.  The float maximum is confirmed by a
    256-bit bound with the triangle inequality.
    """
    S = fam.schedule
    rng = np.random.default_rng(seed)
    L = S.length(m)
    steps = L if L <= 1024 else steps_per_walk
    sup = fam.phi_r_sup()
    with mpmath.workprec(PREC):
        bound_mp = 2 * mpmath.sqrt(m) * _mp(sup)
        triangle = _mp(sup) * sum(level_weight(level) for level in range(1, m + 1))
    bound = float(bound_mp)
    if m == 0:
        return DerivativeBoundReport(m, walks, 0, bound, 0.0, True)
    weights = np.array([fam.weight_float(level) for level in range(m, 0, -1)])
    worst = 0.0
    batch = max(1, 200_000 // steps)
    for start in range(0, walks, batch):
        n = min(batch, walks - start)
        if steps == L:
            t = np.tile(np.arange(L), n)
        else:
            t = rng.integers(0, L, size=n * steps)
        C = chain_arrays(S, m, t + 0.5)
        vals = top_derivative_values(fam, m, C)
        signs = rng.choice((-1.0, 1.0), size=(len(t), m))
        value = np.abs((np.cumprod(signs, axis=1) * vals * weights).sum(axis=1))
        worst = max(worst, float(value.max()))
    passed = worst <= bound * (1 + 1e-12) and triangle <= bound_mp
    return DerivativeBoundReport(m, walks, steps, bound, worst, bool(passed))


# ---------------------------------------------------------------------------
# moment bound


@dataclass(frozen=True)
class MomentReport:
    m: int
    t: int
    y: float
    samples: int
    estimate: float
    stderr: float
    exact: float
    log_bound: float
    passed: bool


def moment_bound_check(fam: EmbeddingFamily, m: int, t: int, y_list, samples: int,
                       seed: int) -> list[MomentReport]:
    """Monte Carlo E[exp(y * phi_gamma^{(r)} on [t, t+1])] against
    exp(y^2/2 sup|phi^{(r)}|^2 sum_{n<=m} 1/(n ln(n+1)^2)); pass iff the
    estimate is at most the bound plus three standard errors."""
    S = fam.schedule
    L = S.length(m)
    if not 0 <= t < L:
        raise ValueError("t out of range")
    sup = float(fam.phi_r_sup())
    with mpmath.workprec(PREC):
        variance = mpmath.fsum(1 / (n * mpmath.log(n + 1) ** 2) for n in range(1, m + 1))
    rng = np.random.default_rng(seed)
    reports = []
    if m == 0:
        values = np.zeros(samples)
        coeffs = np.zeros(0)
    else:
        C = chain_arrays(S, m, np.array([t + 0.5]))
        vals = top_derivative_values(fam, m, C)[0]
        weights = np.array([fam.weight_float(level) for level in range(m, 0, -1)])
        coeffs = (vals * weights)[C.valid[0]]
        signs = rng.choice((-1.0, 1.0), size=(samples, len(coeffs)))
        values = (np.cumprod(signs, axis=1) * coeffs).sum(axis=1) if len(coeffs) else np.zeros(samples)
    for y in y_list:
        e = np.exp(y * values)
        est, se = float(e.mean()), float(e.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
        exact = float(np.prod(np.cosh(y * coeffs))) if len(coeffs) else 1.0
        log_bound = float(y * y / 2 * sup * sup * variance)
        bound = float(mpmath.e ** log_bound) if log_bound < 700 else np.inf
        reports.append(MomentReport(m, t, float(y), samples, est, se, exact, log_bound,
                                    bool(est <= bound + 3 * se)))
    return reports


def _taylor_tables(fam: EmbeddingFamily, m: int):
    """Per level m..1: breakpoints and local Taylor coefficients B^{(j)}(b_k)/j!."""
    out = []
    for level in range(m, 0, -1):
        B = fam.bumps[level]
        bps = np.array([float(b) for b in B.breakpoints])
        coef = np.zeros((len(B.pieces), fam.r + 1))
        for k, p in enumerate(B.pieces):
            local = poly_affine(p, Fraction(1), B.breakpoints[k])
            for j in range(min(len(local), fam.r + 1)):
                coef[k, j] = float(local[j])
        out.append((bps, coef))
    return out


def bump_values(fam: EmbeddingFamily, m: int, C) -> np.ndarray:
    """B_l(tau) for every chain entry (0 where the level is absent), in floats
    evaluated from local Taylor expansions to limit cancellation."""
    vals = np.zeros_like(C.tau)
    for j, (bps, coef) in enumerate(_taylor_tables(fam, m)):
        x = C.tau[:, j]
        idx = np.clip(np.searchsorted(bps, x, side="right") - 1, 0, len(coef) - 1)
        h = x - bps[idx]
        acc = np.zeros_like(x)
        for d in range(coef.shape[1] - 1, -1, -1):
            acc = acc * h + coef[idx, d]
        vals[:, j] = np.where(C.valid[:, j], acc, 0.0)
    return vals
