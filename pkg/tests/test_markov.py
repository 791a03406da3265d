import json
from fractions import Fraction
from itertools import product as iproduct

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carnot_markov.embedding import build_embedding, level_weight
from carnot_markov.graphs import build_schedule, chain
from carnot_markov.markov import (CSV_COLUMNS, truncation_bound, exact_functional_graph, graph_lhs_float, lower,
                                  mc_functional, reports_csv, rhs_cell_spread, rhs_cells, scaling_report)

S = build_schedule(4)
FAM = build_embedding(2, 3)


def brute_force_lhs(S, m, p, k_max):
    """sum_{k<=k_max} 2^{-kp} sum_t E d(X_t, X~_t)^p by enumerating every
    sign of both walks; X~ copies X on copies entered before t - 2^k."""
    T = S.length(m)
    copies = sorted({(lv.level, lv.origin) for t in range(T + 1) for lv in chain(S, m, t)})
    total = Fraction(0)
    for k in range(k_max + 1):
        acc = Fraction(0)
        for t in range(1, T + 1):
            levels = chain(S, m, t)
            shared = [lv.origin < t - 2 ** k for lv in levels]
            n = len(levels)
            for sx in iproduct((1, -1), repeat=n):
                for sy in iproduct((1, -1), repeat=n):
                    if any(sh and a != b for sh, a, b in zip(shared, sx, sy)):
                        continue
                    weight = Fraction(1, 2 ** (n + n - sum(shared)))
                    d = 0
                    for lv, a, b in zip(levels, sx, sy):
                        if a != b:
                            d = 2 * min(lv.tau, S.length(lv.level) - lv.tau)
                            break
                    acc += weight * Fraction(d) ** p
        total += acc / Fraction(2) ** (k * p)
    assert copies  # the chain covers at least one copy
    return total


def test_first_level_values():
    rep = exact_functional_graph(S, 1, 2)
    assert rep.lhs_truncated == Fraction(5, 2)
    assert rep.lhs_full == Fraction(8, 3)
    assert rep.rhs == 2 and rep.mode == "exact"


@pytest.mark.parametrize("m,p,k", [(1, 1, 3), (1, 2, 4), (2, 1, 2), (2, 2, 5), (2, 4, 3), (3, 2, 3)])
def test_exact_matches_brute_force(m, p, k):
    assert exact_functional_graph(S, m, p, k_max=k).lhs == brute_force_lhs(S, m, p, k)


@pytest.mark.parametrize("m", (1, 2))
@pytest.mark.parametrize("p", (1, 2, 4))
def test_transition_equals_collapsed(m, p):
    a = exact_functional_graph(S, m, p)
    b = exact_functional_graph(S, m, p, method="transition")
    assert a.lhs_full == b.lhs_full and a.lhs_truncated == b.lhs_truncated


def test_fractional_exponent_intervals_overlap():
    a = exact_functional_graph(S, 2, Fraction(3, 2)).lhs_full
    b = exact_functional_graph(S, 2, Fraction(3, 2), method="transition").lhs_full
    with mpmath.workprec(256):
        assert a.a <= b.b and b.a <= a.b
        assert a.delta < mpmath.mpf(10) ** -60
    assert abs(float(lower(a)) - graph_lhs_float(S, 2, 1.5)) <= 1e-12 * float(lower(a))


@pytest.mark.parametrize("m", (1, 2, 3))
@pytest.mark.parametrize("p", (1, 2, 4))
def test_lower_bounds(m, p):
    rep = exact_functional_graph(S, m, p)
    assert rep.lhs_truncated >= truncation_bound(S, m)
    assert rep.lhs_full >= Fraction(m * S.length(m), 16)
    assert rep.lhs_full > rep.lhs_truncated


def test_truncation_bound_values():
    assert truncation_bound(S, 1) == Fraction(1, 4)
    assert truncation_bound(S, 2) == Fraction(2, 8) * 8 * Fraction(3, 4)


@pytest.mark.parametrize("m", (1, 2, 3))
def test_float_form_matches_exact(m):
    for p in (1, 2, 4):
        exact = float(exact_functional_graph(S, m, p).lhs_full)
        assert graph_lhs_float(S, m, float(p)) == pytest.approx(exact, rel=1e-12)
        exact_k = float(exact_functional_graph(S, m, p, k_max=2).lhs)
        assert graph_lhs_float(S, m, float(p), k_max=2) == pytest.approx(exact_k, rel=1e-12)


def test_argument_checks():
    with pytest.raises(ValueError):
        exact_functional_graph(S, 9, 2)
    with pytest.raises(ValueError):
        exact_functional_graph(S, 3, 2, method="other")
    with pytest.raises(ValueError):
        exact_functional_graph(S, 4, 2, cap=100)
    with pytest.raises(ValueError):
        mc_functional(S, 1, 2, samples=0)
    with pytest.raises(TypeError):
        mc_functional(S, 1, 2, distance_mode="jet_surrogate")


@pytest.mark.parametrize("m", (1, 2, 3))
def test_graph_monte_carlo_within_three_sigma(m):
    rep = mc_functional(S, m, 2, k_max=12, samples=100_000, seed=3)
    exact = float(exact_functional_graph(S, m, 2, k_max=12).lhs)
    assert abs(rep.lhs - exact) <= 3 * rep.stderr_lhs
    assert rep.rhs == S.length(m)


def test_jet_mode_level_zero():
    rep = mc_functional(FAM, 0, 2, samples=100, distance_mode="jet_surrogate")
    assert rep.lhs == 0 and rep.rhs == 1 and rep.stderr_rhs == 0


def test_jet_rhs_matches_exact_cells():
    m = 2
    rep = mc_functional(FAM, m, 2, samples=200_000, seed=4, distance_mode="jet_surrogate")
    exact = float(rhs_cells(FAM, m, 2).sum())
    assert abs(rep.rhs - exact) <= 4 * rep.stderr_rhs


def test_monte_carlo_is_deterministic_across_workers():
    a = mc_functional(FAM, 2, 2, samples=20_000, seed=7, distance_mode="jet_surrogate", workers=1)
    b = mc_functional(FAM, 2, 2, samples=20_000, seed=7, distance_mode="jet_surrogate", workers=3)
    assert a.to_dict() == b.to_dict()
    c = mc_functional(FAM, 2, 2, samples=20_000, seed=8, distance_mode="jet_surrogate")
    assert c.lhs != a.lhs


def test_rhs_cells_against_direct_enumeration():
    m = 2
    cells = rhs_cells(FAM, m, 2)
    sch = FAM.schedule
    for t in range(0, sch.length(m), 5):
        levels = chain(sch, m, Fraction(2 * t + 1, 2))
        coef = [float(level_weight(lv.level)) * float(FAM.stack(lv.level, lv.tau)[FAM.r]) for lv in levels]
        vals = []
        for signs in iproduct((1, -1), repeat=len(levels)):
            prod, s = 1, 0.0
            for sg, c in zip(signs, coef):
                prod *= sg
                s += prod * c
            vals.append((1 + abs(s)) ** 2)
        assert cells[t] == pytest.approx(sum(vals) / len(vals), rel=1e-12)
    assert np.all(rhs_cells(FAM, 0, 2) == 1)


def test_cell_spread_summary():
    spread = rhs_cell_spread(FAM, range(1, 3), 2)
    assert spread.exhaustive == (True, True)
    assert spread.ratio >= spread.mean_ratio >= 1
    sampled = rhs_cell_spread(FAM, [3], 2, max_cells=1000)
    assert sampled.exhaustive == (False,)


def test_scaling_report_shape():
    rep = scaling_report(2, 2, range(1, 3), 20_000, seed=0)
    assert [row.m for row in rep.rows] == [1, 2]
    assert rep.growth_expected
    data = json.loads(rep.to_json())
    assert data["schedule"] == list(rep.schedule) and "version" in data
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("# schedule=") and len(lines) == 4
    assert not scaling_report(2, 4, [1], 2_000, seed=0).growth_expected


def test_reports_csv():
    text = reports_csv([exact_functional_graph(S, 1, 2), mc_functional(S, 1, 2, samples=1000)])
    header, *rows = text.splitlines()
    assert header.split(",") == list(CSV_COLUMNS) and len(rows) == 2


@given(p=st.sampled_from([1, 2, 3]), k=st.integers(min_value=0, max_value=6))
@settings(max_examples=20)
def test_truncated_sums_increase_in_k(p, k):
    a = exact_functional_graph(S, 2, p, k_max=k).lhs
    b = exact_functional_graph(S, 2, p, k_max=k + 1).lhs
    assert b > a
    assert b <= exact_functional_graph(S, 2, p).lhs_full
