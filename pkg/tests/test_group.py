from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carnot_markov.algebra import abelian, bracket, builtin, filiform
from carnot_markov.group import (bch_terms, build_bch_table, dilate, dilate_batch, inverse, product,
                                 product_batch, structure_residual)
from oracles import engel_coords, engel_matrix, heisenberg_coords, heisenberg_matrix, oracle_product

NAMES = ["abelian(2,1)", "heisenberg", "engel", "filiform(4)", "filiform(5)", "remark_step4", "jet_algebra(4)"]
fractions = st.fractions(min_value=-10, max_value=10, max_denominator=8)
scales = st.fractions(min_value=Fraction(1, 8), max_value=8, max_denominator=8)


def points(A):
    return st.lists(fractions, min_size=A.dim, max_size=A.dim).map(A.point)


def test_weight_two_terms():
    terms = bch_terms(2)
    assert terms == {(0,): 1, (1,): 1, (0, 1): Fraction(1, 2)}


def test_weight_three_terms():
    terms = bch_terms(3)
    assert terms[(0, 0, 1)] == Fraction(1, 12)
    assert terms[(1, 0, 1)] == Fraction(-1, 12)  # = 1/12 [y,[y,x]]
    assert len([w for w in terms if len(w) == 3]) == 2


@pytest.mark.parametrize("name", ["filiform(4)", "remark_step4"])
@given(data=st.data())
def test_weight_four_terms_evaluate_to_known_form(name, data):
    # in any algebra the weight-4 part equals -1/24 [y,[x,[x,y]]]
    A = builtin(name)
    x, y = data.draw(points(A)), data.draw(points(A))
    letters = (x, y)

    def nested(word):
        v = letters[word[-1]]
        for w in reversed(word[:-1]):
            v = bracket(A, letters[w], v)
        return v

    total = A.zero()
    for word, coef in bch_terms(4).items():
        if len(word) == 4:
            total = total + coef * nested(word)
    assert total == Fraction(-1, 24) * nested((1, 0, 0, 1))


def test_abelian_table_is_sum():
    A = abelian(2, 1)
    T = build_bch_table(A)
    x, y = A.point([1, 2, 3]), A.point([4, 5, 6])
    assert product(T, x, y) == x + y


def test_heisenberg_example():
    A = builtin("heisenberg")
    T = build_bch_table(A)
    assert product(T, A.point([1, 0, 0]), A.point([0, 1, 0])) == A.point([1, 1, Fraction(1, 2)])
    assert inverse(A.point([1, 2, 3])) == A.point([-1, -2, -3])
    assert inverse(A.zero()) == A.zero()


@given(data=st.data())
def test_heisenberg_matches_matrices(data):
    A = builtin("heisenberg")
    T = build_bch_table(A)
    x, y = data.draw(points(A)), data.draw(points(A))
    assert tuple(product(T, x, y).coeffs) == oracle_product(heisenberg_matrix, heisenberg_coords,
                                                            list(x.coeffs), list(y.coeffs))


@given(data=st.data())
def test_engel_matches_matrices(data):
    A = builtin("engel")
    T = build_bch_table(A)
    x, y = data.draw(points(A)), data.draw(points(A))
    assert tuple(product(T, x, y).coeffs) == oracle_product(engel_matrix, engel_coords,
                                                            list(x.coeffs), list(y.coeffs))


@pytest.mark.parametrize("name", NAMES)
@given(data=st.data())
def test_group_axioms(name, data):
    A = builtin(name)
    T = build_bch_table(A)
    x, y, z = (data.draw(points(A)) for _ in range(3))
    assert product(T, product(T, x, y), z) == product(T, x, product(T, y, z))
    assert product(T, x, A.zero()) == x == product(T, A.zero(), x)
    assert product(T, x, inverse(x)).is_zero()
    assert product(T, inverse(x), x).is_zero()


@pytest.mark.parametrize("name", NAMES)
@given(data=st.data(), t=scales)
def test_dilation_is_automorphism(name, data, t):
    A = builtin(name)
    T = build_bch_table(A)
    x, y = data.draw(points(A)), data.draw(points(A))
    assert product(T, dilate(t, x), dilate(t, y)) == dilate(t, product(T, x, y))
    assert dilate(1, x) == x


def test_engel_dilation_example():
    A = builtin("engel")
    x = A.point([1, 2, 3, 5])
    assert dilate(2, x) == A.point([2, 4, 12, 40])
    with pytest.raises(ValueError):
        dilate(0, x)


@pytest.mark.parametrize("name", NAMES)
@given(data=st.data(), t=scales)
def test_structure_residual(name, data, t):
    A = builtin(name)
    T = build_bch_table(A)
    x, y = data.draw(points(A)), data.draw(points(A))
    assert not any(structure_residual(T, x, y, 1))
    for s in range(1, A.step + 1):
        assert not any(structure_residual(T, x, A.zero(), s))
        scaled = structure_residual(T, dilate(t, x), dilate(t, y), s)
        assert scaled == tuple(t ** s * v for v in structure_residual(T, x, y, s))


def test_structure_residual_heisenberg_example():
    A = builtin("heisenberg")
    T = build_bch_table(A)
    assert structure_residual(T, A.point([1, 0, 0]), A.point([0, 1, 0]), 2) == (Fraction(1, 2),)


def test_batch_float_matches_exact():
    A = builtin("filiform(5)")
    T = build_bch_table(A)
    rng = np.random.default_rng(0)
    xs, ys = rng.integers(-5, 6, size=(50, A.dim)), rng.integers(-5, 6, size=(50, A.dim))
    fast = product_batch(T, xs.astype(float), ys.astype(float))
    for k in range(50):
        exact = product(T, A.point([int(v) for v in xs[k]]), A.point([int(v) for v in ys[k]]))
        assert np.allclose(fast[k], [float(c) for c in exact.coeffs], rtol=1e-12, atol=1e-9)
    assert np.allclose(dilate_batch(A, 2.0, fast[:1]), [float(c) for c in dilate(2, A.point(
        [Fraction(v).limit_denominator(10 ** 9) for v in fast[0]])).coeffs])


def test_mode_mismatch_rejected():
    A = filiform(2)
    T = build_bch_table(A)
    with pytest.raises(ValueError):
        product(T, A.point([1, 0, 0]), A.point([0.5, 0.0, 0.0]))
