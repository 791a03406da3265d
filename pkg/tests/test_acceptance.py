"""The eleven acceptance criteria, each reported as one PASS/FAIL line."""

import random
import time
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest

from carnot_markov.algebra import builtin
from carnot_markov.embedding import (build_embedding, check_derivative_bound, check_endpoints,
                                     check_separation, moment_bound_check)
from carnot_markov.graphs import build_schedule, materialize, node_address, vertical_distance
from carnot_markov.group import build_bch_table, dilate, inverse, product, structure_residual
from carnot_markov.jetspace import JetPoint, build_phi, identity, jet_dilate, jet_inverse, jet_product, verify_phi
from carnot_markov.markov import (truncation_bound, exact_functional_graph, lower, mc_functional,
                                  rhs_cell_spread, scaling_report)
from carnot_markov.norms import calibrate, certify, check_fourpoint
from conftest import ACCEPTANCE_LINES
from oracles import engel_coords, engel_matrix, heisenberg_coords, heisenberg_matrix, oracle_product

ALGEBRAS = ("abelian(2,1)", "heisenberg", "engel", "filiform(4)", "filiform(5)", "remark_step4")


def record(number, label: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:>3}: {'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def rational(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-12, 12), rng.randint(1, 7))


def rand_point(A, rng):
    return A.point([rational(rng) for _ in range(A.dim)])


def test_c01_group_axioms_exact():
    rng = random.Random(101)
    start = time.perf_counter()
    bad = []
    for name in ALGEBRAS:
        A = builtin(name)
        T = build_bch_table(A)
        e = A.zero()
        for _ in range(200):
            x, y, z = rand_point(A, rng), rand_point(A, rng), rand_point(A, rng)
            if product(T, product(T, x, y), z) != product(T, x, product(T, y, z)):
                bad.append((name, "associativity"))
            if product(T, x, e) != x or product(T, e, x) != x:
                bad.append((name, "identity"))
            if not (product(T, x, inverse(x)).is_zero() and product(T, inverse(x), x).is_zero()):
                bad.append((name, "inverse"))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 30
    record(1, "group axioms, 6 algebras x 200 triples", ok, f"{elapsed:.1f}s, violations={len(bad)}")
    assert ok, bad[:3]


def test_c02_matrix_oracles():
    rng = random.Random(202)
    mismatches = 0
    for name, to_m, to_c, n in (("heisenberg", heisenberg_matrix, heisenberg_coords, 1000),
                                ("engel", engel_matrix, engel_coords, 300)):
        A = builtin(name)
        T = build_bch_table(A)
        for _ in range(n):
            x, y = [rational(rng) for _ in range(A.dim)], [rational(rng) for _ in range(A.dim)]
            if tuple(product(T, A.point(x), A.point(y)).coeffs) != oracle_product(to_m, to_c, x, y):
                mismatches += 1
    record(2, "BCH equals unitriangular exp/log (Heisenberg 1000, Engel 300)", mismatches == 0,
           f"mismatches={mismatches}")
    assert mismatches == 0


def test_c03_structure_residual():
    rng = random.Random(303)
    bad = 0
    for name in ALGEBRAS:
        A = builtin(name)
        T = build_bch_table(A)
        for _ in range(500):
            x, y = rand_point(A, rng), rand_point(A, rng)
            t = Fraction(rng.randint(1, 9), rng.randint(1, 9))
            if any(structure_residual(T, x, y, 1)):
                bad += 1
            s = rng.randint(1, A.step)
            lhs = structure_residual(T, dilate(t, x), dilate(t, y), s)
            rhs = tuple(t ** s * v for v in structure_residual(T, x, y, s))
            if lhs != rhs:
                bad += 1
    record(3, "structure residual: zero at s=1, s-homogeneous", bad == 0, f"violations={bad}")
    assert bad == 0


def test_c04_bump_properties():
    start = time.perf_counter()
    reports = [verify_phi(build_phi(r, verify=False), r) for r in range(1, 6)]
    elapsed = time.perf_counter() - start
    ok = all(rep.ok for rep in reports) and elapsed < 10
    record(4, "bump properties r=1..5, exact", ok, f"{elapsed:.2f}s")
    assert ok, [rep for rep in reports if not rep.ok]


def test_c05_jet_group_law():
    rng = random.Random(505)
    bad = 0
    for r in range(1, 6):
        e = identity(r)
        for _ in range(1000):
            p, q, s = (JetPoint(rational(rng), tuple(rational(rng) for _ in range(r))) for _ in range(3))
            t = Fraction(rng.randint(1, 9), rng.randint(1, 9))
            ok = (jet_product(jet_product(p, q), s) == jet_product(p, jet_product(q, s))
                  and jet_product(p, e) == p == jet_product(e, p)
                  and jet_product(p, jet_inverse(p)) == e == jet_product(jet_inverse(p), p)
                  and jet_dilate(t, jet_product(p, q)) == jet_product(jet_dilate(t, p), jet_dilate(t, q)))
            bad += not ok
    record(5, "jet group axioms and dilation, r=1..5 x 1000", bad == 0, f"violations={bad}")
    assert bad == 0


def test_c06_calibration_suite():
    details, ok = [], True
    for name in ("heisenberg", "engel"):
        A = builtin(name)
        P = calibrate(A, 100_000, seed=11)
        cert = certify(P, 1_000_000, seed=12)
        ok &= cert.violations == 0
        details.append(f"{name}: lambda={[str(v) for v in P.lambdas.values()]} violations={cert.violations}")
        for p in (A.step, A.step + 1):
            a = check_fourpoint(P, p, 200_000, seed=21).c_prime_hat
            b = check_fourpoint(P, p, 200_000, seed=22).c_prime_hat
            agree = a > 0 and b > 0 and max(a, b) <= 2 * min(a, b)
            ok &= agree
            details.append(f"p={p}: c'={a:.4g}/{b:.4g}")
    record(6, "calibration, 10^6 re-certification, four-point c' > 0", ok, "; ".join(details))
    assert ok


def test_c07_graph_structure():
    S = build_schedule(5)
    ok, details = True, []
    for m in range(1, 6):
        G = materialize(S, m, cap=2 * 10 ** 6)
        U = G.to_undirected(as_view=True)
        dist = nx.single_source_shortest_path_length(U, (0, ()))
        T = S.length(m)
        # every vertex sits at graph distance t from the source and T - t from
        # the sink, so d(u, v) <= T for all pairs; the source-sink pair attains it
        labels = all(dist[node] == node[0] for node in G.nodes)
        to_sink = nx.single_source_shortest_path_length(U, (T, ()))
        labels &= all(to_sink[node] == T - node[0] for node in G.nodes)
        level_ok = labels and dist[(T, ())] == T
        ok &= level_ok
        details.append(f"m={m}:{'ok' if level_ok else 'bad'}")
        del G, U, dist, to_sink
    pairs = 0
    for m in range(1, 4):
        G = materialize(S, m)
        U = G.to_undirected()
        layers = {}
        for node in G.nodes:
            layers.setdefault(node[0], []).append(node)
        for nodes in layers.values():
            for a in nodes:
                lengths = nx.single_source_shortest_path_length(U, a)
                for b in nodes:
                    pairs += 1
                    if lengths[b] != vertical_distance(S, node_address(S, m, a), node_address(S, m, b)):
                        ok = False
    details.append(f"vertical pairs checked={pairs}")
    record(7, "diameter 2^N_m (m<=5), vertical distance = BFS (m<=3)", ok, ", ".join(details))
    assert ok


def test_c08_exact_dp():
    S = build_schedule(5)
    start = time.perf_counter()
    r1 = exact_functional_graph(S, 1, 2)
    ok = r1.lhs_truncated == Fraction(5, 2) and r1.lhs_full == Fraction(8, 3)
    details = [f"Gamma_1 p=2: {r1.lhs_truncated}, {r1.lhs_full}"]
    for m in (1, 2, 3):
        for p in (1, 2, 4):
            rep = exact_functional_graph(S, m, p)
            ok &= rep.lhs_truncated >= truncation_bound(S, m)
            ok &= rep.lhs_full >= Fraction(m * S.length(m), 16)
    for m in (1, 2):
        ok &= exact_functional_graph(S, m, 2, method="transition").lhs_full == \
            exact_functional_graph(S, m, 2).lhs_full
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    record(8, "exact DP: 5/2, 8/3, truncation bound and m 2^N/16", ok, f"{'; '.join(details)}; {elapsed:.2f}s")
    assert ok


def test_c09_monte_carlo_validity():
    S = build_schedule(5)
    ok, details = True, []
    for m in (1, 2):
        mc = mc_functional(S, m, 2, k_max=24, samples=1_000_000, seed=9)
        exact = float(exact_functional_graph(S, m, 2).lhs_full)
        z = (mc.lhs - exact) / mc.stderr_lhs
        ok &= abs(z) <= 3
        details.append(f"m={m}: mc={mc.lhs:.5f} exact={exact:.5f} z={z:+.2f}")
    record(9, "graph Monte Carlo within 3 standard errors of exact", ok, "; ".join(details))
    assert ok


def test_c10_embedding_clauses():
    ok, details = True, []
    fam2 = build_embedding(2, 5)
    for m in (1, 2, 3):
        end = check_endpoints(fam2, m)
        ok &= end.ok
    details.append("endpoints ok" if ok else "endpoints failed")
    for r in (2, 3):
        fam = build_embedding(r, 3)
        for m in (1, 2, 3):
            sep = check_separation(fam, m, "exhaustive")
            ok &= sep.passed
            details.append(f"sep r={r} m={m} min={sep.min_ratio:.3g}")
    for m in range(1, 6):
        rep = check_derivative_bound(fam2, m, walks=10_000, seed=m)
        ok &= rep.passed
    details.append("derivative bound m<=5")
    rng = np.random.default_rng(4)
    for m in (1, 2, 3):
        T = fam2.schedule.length(m)
        for t in sorted({0, T // 3, T // 2, int(rng.integers(0, T))}):
            for rep in moment_bound_check(fam2, m, t, [-2, -1, 1, 2], 100_000, seed=m * 1000 + t):
                ok &= rep.passed
    details.append("moments y=+-1,+-2, m<=3")
    record(10, "embedding endpoints, separation, derivative and moment bounds", ok, "; ".join(details))
    assert ok


def test_c11_scaling_pi_lower_increasing():
    start = time.perf_counter()
    first = scaling_report(2, 2, range(1, 5), 1_000_000, seed=0)
    again = scaling_report(2, 2, range(1, 5), 1_000_000, seed=1)
    elapsed = time.perf_counter() - start
    ok = first.increasing and again.increasing and elapsed < 1800
    pis = ", ".join(f"{row.pi_lower:.4f}" for row in first.rows)
    record("11a", "scaling r=2 p=2 m=1..4: pi_lower strictly increasing (two seeds)", ok,
           f"pi_lower={pis}; {elapsed:.1f}s")
    assert ok


def test_c11_rhs_cells_within_factor_3():
    fam = build_embedding(2, 4)
    spread = rhs_cell_spread(fam, range(1, 5), 2)
    ok = spread.ratio <= 3
    record("11b", "per-step jet RHS cells within a factor 3 over all (m,t)", ok,
           f"max/min={spread.ratio:.2f}, per-level mean ratio={spread.mean_ratio:.3f}")
    assert ok, f"cell ratio {spread.ratio:.2f}"
