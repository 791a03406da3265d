from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from carnot_markov.graphs import (GraphSchedule, build_schedule, ceil_2log2, chain, chain_arrays, export_edge_list,
                                  half_width, involution, materialize, node_address, sample_coupled_pair,
                                  sample_walk, sink, source, vertex, vertical_distance, vertices_at)

S = build_schedule(5)


def test_minimal_schedule():
    assert build_schedule(4).N == (0, 1, 3, 7, 11)
    assert [ceil_2log2(m) for m in (1, 2, 3, 4, 5)] == [0, 2, 4, 4, 5]
    assert S.a(1) == 1 and S.A(1) == 0
    assert S.a(2) == 1 and S.A(2) == 3


def test_schedule_validation():
    with pytest.raises(ValueError):
        GraphSchedule("minimal", (0, 1, 2))
    with pytest.raises(ValueError):
        GraphSchedule("minimal", (1,))
    with pytest.raises(ValueError):
        build_schedule(2, mode="embedding")


@pytest.mark.parametrize("m", range(0, 4))
def test_edge_counts_match_materialized_graph(m):
    G = materialize(S, m)
    assert G.number_of_edges() == S.edge_count(m)
    assert nx.is_directed_acyclic_graph(G)
    assert [n for n in G if G.in_degree(n) == 0] == [(0, ())]
    assert [n for n in G if G.out_degree(n) == 0] == [(S.length(m), ())]


def test_small_graphs():
    assert S.edge_count(1) == 4 and S.edge_count(2) == 28
    G0 = materialize(S, 0)
    assert list(G0.edges()) == [((0, ()), (1, ()))]


def test_edge_cap():
    with pytest.raises(ValueError, match="cap"):
        materialize(S, 3, cap=10)


def test_vertical_distance_example():
    u, v = vertex(S, 2, 2, (1, 1)), vertex(S, 2, 2, (-1, 1))
    assert vertical_distance(S, u, v) == 4
    assert vertical_distance(S, u, u) == 0
    with pytest.raises(ValueError):
        vertical_distance(S, u, vertex(S, 2, 1, (1,)))


@pytest.mark.parametrize("m", (1, 2))
def test_vertical_distance_matches_bfs(m):
    U = materialize(S, m).to_undirected()
    for t in range(S.length(m) + 1):
        vs = vertices_at(S, m, t)
        for a in vs:
            lengths = nx.single_source_shortest_path_length(U, (t, a.signs))
            for b in vs:
                assert lengths[(t, b.signs)] == vertical_distance(S, a, b)


def test_vertex_validation():
    with pytest.raises(ValueError):
        vertex(S, 2, 2, (1,))
    with pytest.raises(ValueError):
        vertex(S, 2, 99, ())
    assert source(S, 2).nesting == () and sink(S, 2).t == 8


@given(m=st.integers(min_value=1, max_value=4), data=st.data())
def test_involution_flips_top_sign_only(m, data):
    t = data.draw(st.integers(min_value=0, max_value=S.length(m)))
    vs = vertices_at(S, m, t)
    v = vs[data.draw(st.integers(min_value=0, max_value=len(vs) - 1))]
    w = involution(v)
    assert involution(w) == v
    if v.nesting:
        assert w.signs[0] == -v.signs[0] and w.signs[1:] == v.signs[1:]
        lv = chain(S, m, t)[0]
        assert vertical_distance(S, v, w) == 2 * min(lv.tau, S.length(m) - lv.tau)
    else:
        assert w == v


@given(m=st.integers(min_value=1, max_value=5), data=st.data())
def test_chain_arrays_agree_with_chain(m, data):
    ts = data.draw(st.lists(st.integers(min_value=0, max_value=2 * S.length(m)), min_size=1, max_size=20))
    times = [Fraction(t, 2) for t in ts]
    C = chain_arrays(S, m, np.array([float(t) for t in times]))
    hw = half_width(S, C)
    for row, t in enumerate(times):
        levels = chain(S, m, t)
        assert int(C.valid[row].sum()) == len(levels)
        for j, lv in enumerate(levels):
            assert C.tau[row, j] == float(lv.tau) and C.origin[row, j] == float(lv.origin)
            assert hw[row, j] == 2 * float(min(lv.tau, S.length(lv.level) - lv.tau))


def test_walk_is_a_path():
    walk = sample_walk(S, 3, seed=5)
    assert len(walk) == S.length(3) + 1
    G = materialize(S, 3)
    for u, v in zip(walk, walk[1:]):
        assert G.has_edge((u.t, u.signs), (v.t, v.signs))


def test_walk_top_sign_is_fair():
    n = 4000
    t = S.length(2) // 2
    plus = sum(sample_walk(S, 2, seed=s)[t].signs[0] == 1 for s in range(n))
    assert abs(plus / n - 0.5) <= 3 * (0.25 / n) ** 0.5


def test_coupled_pair_distance_law():
    n = 4000
    hits = sum(vertical_distance(S, *sample_coupled_pair(S, 1, 1, 0, seed=s)) == 2 for s in range(n))
    assert abs(hits / n - 0.5) <= 3 * (0.25 / n) ** 0.5
    with pytest.raises(ValueError):
        sample_coupled_pair(S, 1, 0, 0, seed=0)


def test_serialization():
    assert vertex(S, 2, 2, (1, -1)).serialize() == "2:+-"
    assert source(S, 2).serialize() == "0"
    lines = list(export_edge_list(S, 1))
    assert set(lines) == {"0 1:+", "0 1:-", "1:+ 2", "1:- 2"}
    assert node_address(S, 1, (1, (1,))).serialize() == "1:+"
