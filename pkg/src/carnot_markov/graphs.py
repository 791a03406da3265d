"""Recursive series-parallel graphs and their standard directed random walks.

Level m is built from level m-1: a path of ``a`` unit edges, ``A`` copies of
level m-1 in series, and another ``a`` unit edges; two such chains (signs +
and -) are then glued in parallel at their endpoints.  Source to sink has
length 2^{N_m} along every directed path.

A vertex is addressed by its time t (distance from the source) together with
the signs chosen at every level whose copy contains t in its interior.  The
copy indices follow from t, so only the signs are free.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct
from typing import Iterator

import networkx as nx
import numpy as np

DEFAULT_EDGE_CAP = 10 ** 6


def ceil_2log2(m: int) -> int:
    """Smallest c with 2^c >= m^2, i.e. ceil(2 log2 m), for m >= 1."""
    if m < 1:
        raise ValueError("defined for m >= 1")
    return (m * m - 1).bit_length()


@dataclass(frozen=True)
class GraphSchedule:
    mode: str
    N: tuple[int, ...]
    r: int | None = None

    def __post_init__(self):
        if not self.N or self.N[0] != 0:
            raise ValueError("schedule must start with N_0 = 0")
        for m in range(1, len(self.N)):
            if self.N[m] < max(1, self.N[m - 1] + ceil_2log2(m)):
                raise ValueError(f"N_{m} = {self.N[m]} violates the growth condition")

    @property
    def M(self) -> int:
        return len(self.N) - 1

    def length(self, m: int) -> int:
        """2^{N_m}: the diameter of level m."""
        return 1 << self.N[m]

    def a(self, m: int) -> int:
        return 1 << (self.N[m] - ceil_2log2(m) - 1)

    def A(self, m: int) -> int:
        c = ceil_2log2(m)
        return (1 << (self.N[m] - self.N[m - 1])) * ((1 << c) - 1) >> c

    def edge_count(self, m: int) -> int:
        e = 1
        for level in range(1, m + 1):
            e = 2 * (2 * self.a(level) + self.A(level) * e)
        return e

    def to_dict(self) -> dict:
        return {"mode": self.mode, "r": self.r, "N": list(self.N)}


def build_schedule(M: int, mode: str = "minimal", r: int | None = None) -> GraphSchedule:
    """Smallest admissible N_0..N_M; embedding mode adds N_m >= r and the
    level bound required by the jet embedding."""
    if M < 0:
        raise ValueError("M must be >= 0")
    if mode not in ("minimal", "embedding"):
        raise ValueError(f"unknown schedule mode {mode!r}")
    if mode == "embedding":
        if r is None:
            raise ValueError("embedding schedule needs r")
        from .embedding import k_condition_holds
    N = [0]
    for m in range(1, M + 1):
        n = max(1, N[-1] + ceil_2log2(m))
        if mode == "embedding":
            n = max(n, r)
            while not k_condition_holds(r, N, n):
                n += 1
        N.append(n)
    return GraphSchedule(mode, tuple(N), r if mode == "embedding" else None)


# ---------------------------------------------------------------------------
# addressing


@dataclass(frozen=True)
class ChainLevel:
    level: int
    tau: object      # local time inside this level's copy, 0 < tau < 2^{N_level}
    copy: int        # 0 inside an unit segment, else 1..A
    origin: object   # global time of this copy's source


def chain(S: GraphSchedule, m: int, t) -> list[ChainLevel]:
    """Levels whose copy holds time t strictly inside, from level m downwards.

    Times may be fractional (edge midpoints).  A junction between consecutive
    copies belongs to the earlier copy, where it is the sink.
    """
    out: list[ChainLevel] = []
    level, tau, origin = m, t, 0
    while level >= 1 and 0 < tau < S.length(level):
        a, A, sub = S.a(level), S.A(level), S.length(level - 1)
        rel = tau - a
        if 0 < rel <= A * sub:
            i = -(-rel // sub)  # ceil
            i = int(i)
            out.append(ChainLevel(level, tau, i, origin))
            origin = origin + a + (i - 1) * sub
            tau = rel - (i - 1) * sub
            level -= 1
        else:
            out.append(ChainLevel(level, tau, 0, origin))
            break
    return out


def depth(S: GraphSchedule, m: int, t) -> int:
    return len(chain(S, m, t))


@dataclass(frozen=True)
class VertexAddress:
    m: int
    t: int
    nesting: tuple[tuple[int, int], ...]  # (sign, copy index) per level, top first

    @property
    def signs(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.nesting)

    def serialize(self) -> str:
        body = "".join("+" if s > 0 else "-" for s in self.signs)
        return f"{self.t}:{body}" if body else str(self.t)


def vertex(S: GraphSchedule, m: int, t: int, signs=()) -> VertexAddress:
    if not 0 <= t <= S.length(m):
        raise ValueError(f"t = {t} outside [0, {S.length(m)}]")
    levels = chain(S, m, t)
    signs = tuple(int(s) for s in signs)
    if len(signs) != len(levels) or any(s not in (1, -1) for s in signs):
        raise ValueError(f"time {t} on level {m} needs {len(levels)} signs in {{+1,-1}}")
    return VertexAddress(m, t, tuple((s, lv.copy) for s, lv in zip(signs, levels)))


def vertices_at(S: GraphSchedule, m: int, t: int) -> list[VertexAddress]:
    d = depth(S, m, t)
    return [vertex(S, m, t, signs) for signs in iproduct((1, -1), repeat=d)]


def source(S: GraphSchedule, m: int) -> VertexAddress:
    return VertexAddress(m, 0, ())


def sink(S: GraphSchedule, m: int) -> VertexAddress:
    return VertexAddress(m, S.length(m), ())


def involution(v: VertexAddress) -> VertexAddress:
    """Flip the top-level sign (fixes source and sink)."""
    if not v.nesting:
        return v
    (s, i), rest = v.nesting[0], v.nesting[1:]
    return VertexAddress(v.m, v.t, ((-s, i),) + rest)


def vertical_distance(S: GraphSchedule, v1: VertexAddress, v2: VertexAddress) -> int:
    if v1.m != v2.m or v1.t != v2.t:
        raise ValueError("not a vertical pair")
    for lv, (s1, _), (s2, _) in zip(chain(S, v1.m, v1.t), v1.nesting, v2.nesting):
        if s1 != s2:
            return 2 * min(lv.tau, S.length(lv.level) - lv.tau)
    return 0


# ---------------------------------------------------------------------------
# explicit graphs


def _local_edges(S: GraphSchedule, level: int) -> list[tuple[tuple, tuple]]:
    """Edges of the given level with labels (time, signs) relative to its source."""
    if level == 0:
        return [((0, ()), (1, ()))]
    sub = _local_edges(S, level - 1)
    a, A, L, sub_len = S.a(level), S.A(level), S.length(level), S.length(level - 1)
    edges = []
    for sgn in (1, -1):
        def lab(t, inner=()):
            if t == 0 or t == L:
                return (t, ())
            return (t, (sgn,) + inner)

        for t in range(a):
            edges.append((lab(t), lab(t + 1)))
        for i in range(A):
            base = a + i * sub_len
            for (t0, s0), (t1, s1) in sub:
                edges.append((lab(base + t0, s0), lab(base + t1, s1)))
        for t in range(a + A * sub_len, L):
            edges.append((lab(t), lab(t + 1)))
    return edges


def materialize(S: GraphSchedule, m: int, cap: int = DEFAULT_EDGE_CAP) -> nx.DiGraph:
    """Directed graph on nodes (t, signs); source (0, ()) and sink (2^{N_m}, ())."""
    count = S.edge_count(m)
    if count > cap:
        raise ValueError(f"level {m} has {count} edges, above the cap {cap}")
    G = nx.DiGraph()
    G.add_edges_from(_local_edges(S, m))
    G.graph.update(level=m, schedule=S.N)
    return G


def node_address(S: GraphSchedule, m: int, node: tuple) -> VertexAddress:
    t, signs = node
    return vertex(S, m, t, signs)


def export_edge_list(S: GraphSchedule, m: int, cap: int = DEFAULT_EDGE_CAP) -> Iterator[str]:
    G = materialize(S, m, cap)
    for u, v in sorted(G.edges()):
        yield f"{node_address(S, m, u).serialize()} {node_address(S, m, v).serialize()}"


# ---------------------------------------------------------------------------
# walks


class Walk:
    """Standard directed random walk with signs drawn lazily per copy.

    The sign of a copy is chosen when the walk leaves that copy's source, so
    copies are identified by (level, origin).
    """

    def __init__(self, S: GraphSchedule, m: int, rng: np.random.Generator, shared=None):
        self.S, self.m, self.rng = S, m, rng
        self.signs: dict[tuple[int, object], int] = {}
        self.shared = shared  # (other_walk, split_time): copy choices before split_time

    def sign(self, level: int, origin) -> int:
        key = (level, origin)
        if key not in self.signs:
            if self.shared is not None and origin < self.shared[1]:
                self.signs[key] = self.shared[0].sign(level, origin)
            else:
                self.signs[key] = 1 if self.rng.random() < 0.5 else -1
        return self.signs[key]

    def address(self, t: int) -> VertexAddress:
        t = min(max(0, t), self.S.length(self.m))
        levels = chain(self.S, self.m, t)
        return VertexAddress(self.m, t, tuple((self.sign(lv.level, lv.origin), lv.copy) for lv in levels))

    def step_chain(self, t: int) -> list[tuple[ChainLevel, int]]:
        """Copies traversed by the edge (t, t+1) with this walk's signs."""
        levels = chain(self.S, self.m, Fraction(2 * t + 1, 2))
        return [(lv, self.sign(lv.level, lv.origin)) for lv in levels]


def sample_walk(S: GraphSchedule, m: int, seed) -> list[VertexAddress]:
    w = Walk(S, m, np.random.default_rng(seed))
    return [w.address(t) for t in range(S.length(m) + 1)]


def sample_coupled_pair(S: GraphSchedule, m: int, t: int, k: int, seed) -> tuple[VertexAddress, VertexAddress]:
    """X_t and the walk that follows X up to time t - 2^k and is independent after."""
    if not 1 <= t <= S.length(m) or k < 0:
        raise ValueError("need 1 <= t <= 2^{N_m} and k >= 0")
    rng = np.random.default_rng(seed)
    w = Walk(S, m, rng)
    twin = Walk(S, m, rng, shared=(w, t - 2 ** k))
    return w.address(t), twin.address(t)


# ---------------------------------------------------------------------------
# vectorized chains


@dataclass
class ChainArrays:
    """Per-sample chain data; column j is level m - j."""

    tau: np.ndarray     # float64 local times
    origin: np.ndarray  # float64 copy source times
    valid: np.ndarray   # bool, level present in the chain
    levels: np.ndarray  # int level numbers (same for every row)


def chain_arrays(S: GraphSchedule, m: int, t: np.ndarray) -> ChainArrays:
    t = np.asarray(t, dtype=float)
    n = t.shape[0]
    tau = np.zeros((n, m))
    origin = np.zeros((n, m))
    valid = np.zeros((n, m), dtype=bool)
    cur, org = t.copy(), np.zeros(n)
    active = np.ones(n, dtype=bool)
    for j, level in enumerate(range(m, 0, -1)):
        inside = active & (cur > 0) & (cur < S.length(level))
        valid[:, j] = inside
        tau[:, j] = np.where(inside, cur, 0.0)
        origin[:, j] = np.where(inside, org, 0.0)
        a, A, sub = S.a(level), S.A(level), S.length(level - 1)
        rel = cur - a
        in_copy = inside & (rel > 0) & (rel <= A * sub)
        i = np.ceil(np.where(in_copy, rel, 1.0) / sub)
        org = np.where(in_copy, org + a + (i - 1) * sub, org)
        cur = np.where(in_copy, rel - (i - 1) * sub, 0.0)
        active = in_copy
    return ChainArrays(tau, origin, valid, np.arange(m, 0, -1))


def half_width(S: GraphSchedule, C: ChainArrays) -> np.ndarray:
    """2 min(tau, 2^{N_level} - tau): the distance between opposite signs at each level."""
    lengths = np.array([float(S.length(level)) for level in C.levels])
    return 2.0 * np.minimum(C.tau, lengths - C.tau)
