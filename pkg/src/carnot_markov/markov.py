"""Markov p-convexity functional on the graphs Gamma_m and their jet images.

For a walk X and a twin that copies X up to time s = t - 2^k and moves
independently afterwards, the functional compares

    LHS = sum_k sum_t E[d(X_t, X~_t)^p] / 2^{kp}
    RHS = sum_t E[d(X_{t+1}, X_t)^p].

Once two walks choose a sign independently at some level, every deeper
choice is independent as well, because copies further down start later.
So the pair agrees down to the first level whose copy starts at or after s;
from there each level separates them with probability 1/2, at distance
2 min(tau, 2^{N_l} - tau).  This closed form is the collapsed DP used in
exact mode; the transition DP on the materialized graph cross-checks it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import mpmath
import networkx as nx
import numpy as np

from . import __version__
from .embedding import (EmbeddingFamily, bump_values, build_embedding, level_weight,
                        top_derivative_values)
from .graphs import GraphSchedule, chain, chain_arrays, half_width, materialize
from .parallel import pmap, stream

PREC = 256
CSV_COLUMNS = ("m", "N_m", "p", "mode", "distance_mode", "lhs", "rhs", "pi_lower",
               "stderr_lhs", "stderr_rhs", "seed")


@dataclass(frozen=True)
class ConvexityReport:
    """LHS and RHS of the functional; pi_lower = (LHS/RHS)^{1/p}.

    Exact mode holds Fractions (or mpmath intervals when d^p is irrational);
    jet-surrogate numbers are normalized with the unknown lower-bound
    constant set to 1.
    """

    m: int
    p: object
    k_max: int | None
    lhs: object
    rhs: object
    pi_lower: object
    mode: str
    distance_mode: str
    schedule: tuple[int, ...]
    stderr_lhs: float | None = None
    stderr_rhs: float | None = None
    samples: int | None = None
    seed: int | None = None
    lhs_truncated: object = None
    lhs_full: object = None
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "m": self.m, "N_m": self.schedule[self.m], "p": _text(self.p), "mode": self.mode,
            "distance_mode": self.distance_mode, "lhs": _text(self.lhs), "rhs": _text(self.rhs),
            "pi_lower": _text(self.pi_lower), "stderr_lhs": _text(self.stderr_lhs),
            "stderr_rhs": _text(self.stderr_rhs), "seed": _text(self.seed),
        }

    def to_dict(self) -> dict:
        d = self.row()
        d.update(k_max=self.k_max, samples=self.samples, schedule=list(self.schedule),
                 lhs_truncated=_text(self.lhs_truncated), lhs_full=_text(self.lhs_full),
                 extra={k: _text(v) for k, v in self.extra.items()}, version=__version__)
        return d


def _text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, mpmath.ctx_iv.ivmpf):
        a, b = _endpoints(v)
        return f"[{mpmath.nstr(a, 20)}, {mpmath.nstr(b, 20)}]"
    if isinstance(v, mpmath.mpf):
        return mpmath.nstr(v, 20)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _endpoints(v):
    with mpmath.workprec(max(PREC, mpmath.iv.prec)):
        return mpmath.mpf(v.a), mpmath.mpf(v.b)


def lower(v):
    """Guaranteed lower endpoint of an exact or interval quantity, as mpf."""
    if isinstance(v, mpmath.ctx_iv.ivmpf):
        return _endpoints(v)[0]
    if isinstance(v, Fraction):
        with mpmath.workprec(PREC):
            return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def _exact_p(p):
    p = Fraction(p)
    if p <= 0:
        raise ValueError("p must be positive")
    return p


class _Arith:
    """d^p and 2^{-kp} in Fractions for integer p, in 256-bit intervals otherwise."""

    def __init__(self, p: Fraction):
        self.p = p
        self.exact = p.denominator == 1
        if not self.exact:
            mpmath.iv.prec = PREC
            self.piv = mpmath.iv.mpf(p.numerator) / p.denominator

    def num(self, q):
        if self.exact:
            return Fraction(q)
        q = Fraction(q)
        return mpmath.iv.mpf(q.numerator) / q.denominator

    def power(self, d):
        if self.exact:
            return Fraction(d) ** self.p.numerator
        d = Fraction(d)
        if d == 0:
            return mpmath.iv.mpf(0)
        return (mpmath.iv.mpf(d.numerator) / d.denominator) ** self.piv

    def two_pow_neg(self, k: int):
        """2^{-kp}"""
        if self.exact:
            return Fraction(1, 2 ** (k * self.p.numerator))
        return mpmath.iv.mpf(2) ** (-k * self.piv)

    def zero(self):
        return Fraction(0) if self.exact else mpmath.iv.mpf(0)


def _cell_expectations(S: GraphSchedule, m: int, t: int, ks, ar: _Arith) -> list:
    """E[d(X_t, X~_t)^p] for each k in ks, from the collapsed closed form."""
    levels = chain(S, m, t)
    d = [ar.power(2 * min(lv.tau, S.length(lv.level) - lv.tau)) for lv in levels]
    out = []
    for k in ks:
        s = t - 2 ** k
        j0 = next((j for j, lv in enumerate(levels) if lv.origin >= s), len(levels))
        e = ar.zero()
        for j in range(j0, len(levels)):
            e = e + d[j] * ar.num(Fraction(1, 2 ** (j - j0 + 1)))
        out.append(e)
    return out


def _transition_expectations(S: GraphSchedule, m: int, ks, ar: _Arith) -> dict:
    """Same quantities as the collapsed form, by propagating exact laws on the
    materialized graph and measuring with BFS distances."""
    G = materialize(S, m)
    T = S.length(m)
    U = G.to_undirected()
    layers: dict[int, list] = {}
    for node in G.nodes:
        layers.setdefault(node[0], []).append(node)

    def step(law: dict) -> dict:
        nxt: dict = {}
        for v, q in law.items():
            succ = list(G.successors(v))
            for u in succ:
                nxt[u] = nxt.get(u, Fraction(0)) + q / len(succ)
        return nxt

    forward = [{(0, ()): Fraction(1)}]
    for _ in range(T):
        forward.append(step(forward[-1]))

    def evolve(v, steps):
        law = {v: Fraction(1)}
        for _ in range(steps):
            law = step(law)
        return law

    dist: dict = {}
    for t in range(1, T + 1):
        for v in layers[t]:
            lengths = nx.single_source_shortest_path_length(U, v)
            for w in layers[t]:
                dist[(v, w)] = lengths[w]
    out = {}
    for t in range(1, T + 1):
        for k in ks:
            s = max(0, t - 2 ** k)
            total = ar.zero()
            for v, q in forward[s].items():
                law = evolve(v, t - s)
                for u1, q1 in law.items():
                    for u2, q2 in law.items():
                        if u1 != u2:
                            total = total + ar.num(q * q1 * q2) * ar.power(dist[(u1, u2)])
            out[(t, k)] = total
    return out


def _sum(values, ar: _Arith):
    acc = ar.zero()
    for v in values:
        acc = acc + v
    return acc


def exact_functional_graph(S: GraphSchedule, m: int, p, k_max: int | None = None,
                           method: str = "collapsed", workers: int = 1,
                           cap: int = 10 ** 6) -> ConvexityReport:
    """Exact LHS for the graph metric; ``lhs`` sums k <= k_max (all k when
    k_max is None), ``lhs_truncated`` sums k <= N_m, ``lhs_full`` all k."""
    if not 0 <= m <= S.M:
        raise ValueError(f"level {m} outside 0..{S.M}")
    if S.edge_count(m) > cap:
        raise ValueError(f"level {m} has {S.edge_count(m)} edges, above the cap {cap}")
    if method not in ("collapsed", "transition"):
        raise ValueError("method is 'collapsed' or 'transition'")
    p = _exact_p(p)
    ar = _Arith(p)
    N, T = S.N[m], S.length(m)
    # for 2^k >= T every twin is independent from time 0 on, so the cell
    # values for k >= N repeat those at k = N
    K = N if k_max is None else max(N, k_max)
    ks = list(range(K + 1))
    if method == "collapsed":
        rows = pmap(lambda t: _cell_expectations(S, m, t, ks, ar), range(1, T + 1), workers)
        cells = {(t, k): rows[t - 1][k] for t in range(1, T + 1) for k in ks}
    else:
        cells = _transition_expectations(S, m, ks, ar)
    per_k = [_sum((cells[(t, k)] for t in range(1, T + 1)), ar) for k in ks]
    scaled = [per_k[k] * ar.two_pow_neg(k) for k in ks]
    truncated = _sum(scaled[: N + 1], ar)
    # geometric tail sum_{k > N} 2^{-kp} = 2^{-(N+1)p} / (1 - 2^{-p})
    tail = per_k[N] * ar.two_pow_neg(N + 1) / (ar.num(1) - ar.two_pow_neg(1))
    full = truncated + tail
    lhs = full if k_max is None else _sum(scaled[: k_max + 1], ar)
    rhs = Fraction(T)
    with mpmath.workprec(PREC):
        pi = (lower(lhs) / T) ** (1 / lower(p))
    return ConvexityReport(m, p, k_max, lhs, rhs, pi, "exact", "graph", S.N,
                           lhs_truncated=truncated, lhs_full=full, extra={"method": method})


def truncation_bound(S: GraphSchedule, m: int) -> Fraction:
    """(m/8) 2^{N_m} prod_{i=1}^{m-1} (1 - (i+1)^{-2})."""
    prod = Fraction(1)
    for i in range(1, m):
        prod *= 1 - Fraction(1, (i + 1) ** 2)
    return Fraction(m, 8) * S.length(m) * prod


def graph_lhs_float(S: GraphSchedule, m: int, p: float, k_max: int | None = None,
                    chunk: int = 1 << 16) -> float:
    """Vectorized collapsed form in floats, for levels too large for Fractions."""
    N, T = S.N[m], S.length(m)
    K = N if k_max is None else max(N, k_max)
    per_k = np.zeros(K + 1)
    for start in range(1, T + 1, chunk):
        t = np.arange(start, min(T, start + chunk - 1) + 1, dtype=float)
        C = chain_arrays(S, m, t)
        dp = np.where(C.valid, half_width(S, C), 0.0) ** p
        for k in range(K + 1):
            if k < N:
                mask = C.valid & (C.origin >= (t - 2.0 ** k)[:, None])
            else:
                mask = C.valid
            pos = np.cumsum(mask, axis=1)
            per_k[k] += float((np.where(mask, dp * 0.5 ** pos, 0.0)).sum())
    scaled = per_k * 2.0 ** (-p * np.arange(K + 1))
    if k_max is not None:
        return float(scaled[: k_max + 1].sum())
    return float(scaled.sum() + per_k[N] * 2.0 ** (-p * (N + 1)) / (1 - 2.0 ** -p))


# ---------------------------------------------------------------------------
# Monte Carlo


def _split(samples: int, parts: int) -> list[int]:
    base, extra = divmod(samples, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _lhs_stratum(S, fam, m, p, k, n, seed):
    """(sum of LHS term estimate, variance) for one k with n samples."""
    if n == 0:
        return 0.0, 0.0
    rng = stream(seed, 1, k)
    T = S.length(m)
    t = rng.integers(1, T + 1, size=n).astype(float)
    if m == 0:
        return 0.0, 0.0
    C = chain_arrays(S, m, t)
    shared = C.origin < (t - 2.0 ** k)[:, None]
    sx = rng.choice((-1.0, 1.0), size=C.tau.shape)
    sy = np.where(shared, sx, rng.choice((-1.0, 1.0), size=C.tau.shape))
    if fam is None:
        differ = C.valid & (sx != sy)
        first = differ.argmax(axis=1)
        d = half_width(S, C)[np.arange(n), first]
        values = np.where(differ.any(axis=1), d, 0.0) ** p
    else:
        w = np.array([float(level_weight(level)) for level in C.levels])
        vals = bump_values(fam, m, C) * w
        px, py = np.cumprod(sx, axis=1), np.cumprod(sy, axis=1)
        delta = ((px - py) * vals).sum(axis=1)
        values = np.abs(delta) ** (p / fam.r)
    scale = T * 2.0 ** (-k * p)
    var = values.var(ddof=1) / n if n > 1 else 0.0
    return scale * float(values.mean()), scale * scale * float(var)


def _rhs_jet(fam, m, p, n, seed):
    S = fam.schedule
    T = S.length(m)
    if m == 0:
        return float(T), 0.0
    rng = stream(seed, 2)
    t = rng.integers(0, T, size=n).astype(float)
    C = chain_arrays(S, m, t + 0.5)
    w = np.array([float(level_weight(level)) for level in C.levels])
    top = top_derivative_values(fam, m, C) * w
    signs = np.cumprod(rng.choice((-1.0, 1.0), size=C.tau.shape), axis=1)
    values = (1.0 + np.abs((signs * top).sum(axis=1))) ** p
    var = values.var(ddof=1) / n if n > 1 else 0.0
    return T * float(values.mean()), T * T * float(var)


def mc_functional(target, m: int, p: float, k_max: int | None = None, samples: int = 10 ** 6,
                  seed: int = 0, distance_mode: str = "graph", workers: int = 1) -> ConvexityReport:
    """Monte Carlo estimate, stratified over k with equal sample counts.

    Graph mode measures vertical distances in Gamma_m.  Jet mode measures
    |u_0(F X_t) - u_0(F X~_t)|^{p/r} for the LHS and (1 + sup|phi^{(r)}|)^p
    per step for the RHS.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if distance_mode == "graph":
        fam = target if isinstance(target, EmbeddingFamily) else None
        S = fam.schedule if fam is not None else target
        fam = None
    elif distance_mode == "jet_surrogate":
        if not isinstance(target, EmbeddingFamily):
            raise TypeError("jet_surrogate mode needs an EmbeddingFamily")
        fam, S = target, target.schedule
    else:
        raise ValueError("distance_mode is 'graph' or 'jet_surrogate'")
    if not isinstance(S, GraphSchedule) or not 0 <= m <= S.M:
        raise ValueError(f"level {m} not available")
    p = float(p)
    if p <= 0:
        raise ValueError("p must be positive")
    K = S.N[m] + 8 if k_max is None else int(k_max)
    counts = _split(samples, K + 1)
    parts = pmap(lambda k: _lhs_stratum(S, fam, m, p, k, counts[k], seed), range(K + 1), workers)
    lhs = sum(v for v, _ in parts)
    se_lhs = float(np.sqrt(sum(v for _, v in parts)))
    if fam is None:
        rhs, se_rhs = float(S.length(m)), 0.0
    else:
        rhs, var = _rhs_jet(fam, m, p, samples, seed)
        se_rhs = float(np.sqrt(var))
    pi = (lhs / rhs) ** (1 / p) if rhs > 0 else float("nan")
    return ConvexityReport(m, p, K, lhs, rhs, pi, "monte_carlo", distance_mode, S.N,
                           se_lhs, se_rhs, samples, seed)


# ---------------------------------------------------------------------------
# per-step RHS cells


def rhs_cells(fam: EmbeddingFamily, m: int, p: float, t: np.ndarray | None = None) -> np.ndarray:
    """Exact E[(1 + |phi_gamma^{(r)}| on [t, t+1])^p] for each step t.

    The partial sign products along a chain are i.i.d. uniform, so the
    expectation is an average over every sign pattern.  All steps are used
    when t is None.
    """
    S = fam.schedule
    T = S.length(m)
    t = np.arange(T, dtype=float) if t is None else np.asarray(t, dtype=float)
    if m == 0:
        return np.ones(len(t))
    C = chain_arrays(S, m, t + 0.5)
    w = np.array([float(level_weight(level)) for level in C.levels])
    coef = top_derivative_values(fam, m, C) * w
    acc = np.zeros(len(t))
    patterns = np.array(np.meshgrid(*([[1.0, -1.0]] * m), indexing="ij")).reshape(m, -1).T
    for pat in patterns:
        acc += (1.0 + np.abs(coef @ pat)) ** p
    return acc / len(patterns)


@dataclass(frozen=True)
class CellSpread:
    m_range: tuple[int, ...]
    per_m_min: tuple[float, ...]
    per_m_max: tuple[float, ...]
    per_m_mean: tuple[float, ...]
    exhaustive: tuple[bool, ...]

    @property
    def ratio(self) -> float:
        return max(self.per_m_max) / min(self.per_m_min)

    @property
    def mean_ratio(self) -> float:
        return max(self.per_m_mean) / min(self.per_m_mean)


def rhs_cell_spread(fam: EmbeddingFamily, m_range, p: float, max_cells: int = 1 << 22,
                    seed: int = 0) -> CellSpread:
    """Min, max and mean of the per-step RHS cells per level; levels with more
    than ``max_cells`` steps use a uniform sample of steps."""
    lo, hi, mean, full = [], [], [], []
    for m in m_range:
        T = fam.schedule.length(m)
        if T <= max_cells:
            cells, ex = rhs_cells(fam, m, p), True
        else:
            t = stream(seed, 3, m).integers(0, T, size=max_cells)
            cells, ex = rhs_cells(fam, m, p, t), False
        lo.append(float(cells.min()))
        hi.append(float(cells.max()))
        mean.append(float(cells.mean()))
        full.append(ex)
    return CellSpread(tuple(m_range), tuple(lo), tuple(hi), tuple(mean), tuple(full))


# ---------------------------------------------------------------------------
# scaling study


@dataclass(frozen=True)
class ScalingRow:
    m: int
    N_m: int
    graph_lhs: float
    jet_lhs: float
    jet_lhs_stderr: float
    jet_rhs: float
    jet_rhs_stderr: float
    pi_lower: float
    predicted: float


@dataclass(frozen=True)
class ScalingReport:
    r: int
    p: float
    samples: int
    seed: int
    schedule: tuple[int, ...]
    rows: tuple[ScalingRow, ...]
    growth_expected: bool

    @property
    def increasing(self) -> bool:
        pis = [row.pi_lower for row in self.rows]
        return all(b > a for a, b in zip(pis, pis[1:]))

    def to_dict(self) -> dict:
        return {"r": self.r, "p": self.p, "samples": self.samples, "seed": self.seed,
                "schedule": list(self.schedule), "version": __version__,
                "growth_expected": self.growth_expected, "increasing": self.increasing,
                "normalization": "c-normalized",
                "rows": [asdict(row) for row in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schedule={','.join(map(str, self.schedule))} version={__version__} "
                  f"r={self.r} p={self.p} samples={self.samples} seed={self.seed} c-normalized\n")
        writer = csv.writer(buf, lineterminator="\n")
        names = list(ScalingRow.__dataclass_fields__)
        writer.writerow(names)
        for row in self.rows:
            writer.writerow([repr(getattr(row, n)) if isinstance(getattr(row, n), float)
                             else getattr(row, n) for n in names])
        return buf.getvalue()


def scaling_report(r: int, p: float, m_range, samples: int, seed: int,
                   workers: int = 1) -> ScalingReport:
    """Per level: exact graph LHS, Monte Carlo jet LHS and RHS, the
    c-normalized pi_lower and the predicted m^{1-p/2r} 2^{N_m} / ln(m+1)^{p/r}."""
    m_range = list(m_range)
    if p <= 0 or not m_range or min(m_range) < 1:
        raise ValueError("need p > 0 and levels >= 1")
    fam = build_embedding(r, max(m_range))
    S = fam.schedule
    rows = []
    for m in m_range:
        rep = mc_functional(fam, m, p, samples=samples, seed=seed,
                            distance_mode="jet_surrogate", workers=workers)
        predicted = m ** (1 - p / (2 * r)) * 2.0 ** S.N[m] / np.log(m + 1) ** (p / r)
        rows.append(ScalingRow(m, S.N[m], graph_lhs_float(S, m, p), rep.lhs, rep.stderr_lhs,
                               rep.rhs, rep.stderr_rhs, rep.pi_lower, float(predicted)))
    return ScalingReport(r, float(p), samples, seed, S.N, tuple(rows), p < 2 * r)


def reports_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        writer.writerow(rep.row())
    return buf.getvalue()
