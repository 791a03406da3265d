"""Group law on a graded nilpotent algebra via the truncated BCH series."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .algebra import MAX_STEP, GradedAlgebra, GroupPoint

X, Y = 0, 1


def _compositions(total: int):
    """All sequences of (p, q) blocks with p + q >= 1 summing to ``total`` letters."""
    if total == 0:
        yield ()
        return
    for size in range(1, total + 1):
        for p in range(size + 1):
            for rest in _compositions(total - size):
                yield ((p, size - p),) + rest


def bch_terms(max_weight: int) -> dict[tuple[int, ...], Fraction]:
    """Right-nested bracket words of the BCH series up to ``max_weight`` letters.

    A word (w_1, ..., w_L) stands for [w_1, [w_2, ... [w_{L-1}, w_L]]].  Words
    ending in a repeated letter vanish and are dropped; a word ending (y, x) is
    rewritten as the negated word ending (x, y).
    """
    terms: dict[tuple[int, ...], Fraction] = {}
    for length in range(1, max_weight + 1):
        for blocks in _compositions(length):
            n = len(blocks)
            denom = length
            word: list[int] = []
            for p, q in blocks:
                denom *= factorial(p) * factorial(q)
                word.extend([X] * p + [Y] * q)
            if length >= 2 and word[-1] == word[-2]:
                continue
            coef = Fraction((-1) ** (n + 1), n * denom)
            if length >= 2 and word[-2:] == [Y, X]:
                word[-2:] = [X, Y]
                coef = -coef
            key = tuple(word)
            terms[key] = terms.get(key, Fraction(0)) + coef
    return {w: c for w, c in sorted(terms.items(), key=lambda kv: (len(kv[0]), kv[0])) if c != 0}


@dataclass(frozen=True)
class BchTable:
    algebra: GradedAlgebra
    terms: tuple[tuple[Fraction, tuple[int, ...]], ...]

    def by_weight(self) -> dict[int, list[tuple[Fraction, tuple[int, ...]]]]:
        out: dict[int, list] = {}
        for coef, word in self.terms:
            out.setdefault(len(word), []).append((coef, word))
        return out

    def describe(self) -> list[str]:
        lines = []
        for coef, word in self.terms:
            letters = ["xy"[w] for w in word]
            expr = letters[-1]
            for c in reversed(letters[:-1]):
                expr = f"[{c},{expr}]"
            lines.append(f"{coef} {expr}")
        return lines


def build_bch_table(A: GradedAlgebra) -> BchTable:
    if not 1 <= A.step <= MAX_STEP:
        raise ValueError(f"step {A.step} outside supported range 1..{MAX_STEP}")
    terms = bch_terms(A.step)
    return BchTable(A, tuple((c, w) for w, c in terms.items()))


# ---------------------------------------------------------------------------
# batch arithmetic on arrays of shape (..., dim); works for float and object dtype


def bracket_batch(A: GradedAlgebra, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(x.shape, y.shape), dtype=np.result_type(x, y))
    if out.dtype == object:
        out[...] = Fraction(0)
    float_mode = out.dtype != object
    for a, b, c, v in A.constants:
        coef = float(v) if float_mode else v
        out[..., c] = out[..., c] + coef * x[..., a] * y[..., b]
    return out


def _combine(T: BchTable, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    A = T.algebra
    float_mode = np.result_type(x, y) != object
    letters = (x, y)
    cache: dict[tuple[int, ...], np.ndarray] = {}

    def value(word):
        if word in cache:
            return cache[word]
        if len(word) == 1:
            v = letters[word[0]]
        else:
            v = bracket_batch(A, letters[word[0]], value(word[1:]))
        cache[word] = v
        return v

    out = x + y
    for coef, word in T.terms:
        if len(word) == 1:
            continue
        c = float(coef) if float_mode else coef
        out = out + c * value(word)
    return out


def product_batch(T: BchTable, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise group product of coefficient arrays."""
    return _combine(T, np.asarray(x), np.asarray(y))


def dilate_batch(A: GradedAlgebra, t, x: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    w = np.asarray(A.weights)
    scale = t[..., None] ** w if t.ndim else t ** w
    return x * scale


def _as_array(x: GroupPoint) -> np.ndarray:
    if x.exact:
        arr = np.empty(len(x.coeffs), dtype=object)
        arr[:] = x.coeffs
        return arr
    return np.asarray(x.coeffs, dtype=float)


def product(T: BchTable, x: GroupPoint, y: GroupPoint) -> GroupPoint:
    if x.algebra != T.algebra or y.algebra != T.algebra:
        raise ValueError("algebra mismatch")
    if x.exact != y.exact:
        raise ValueError("scalar mode mismatch")
    z = _combine(T, _as_array(x), _as_array(y))
    return GroupPoint(T.algebra, tuple(z.tolist()))


def inverse(x: GroupPoint) -> GroupPoint:
    return -x


def dilate(t, x: GroupPoint) -> GroupPoint:
    if t <= 0:
        raise ValueError("dilation factor must be positive")
    if x.exact and not isinstance(t, float):
        t = Fraction(t)
    else:
        t = float(t)
    return GroupPoint(x.algebra, tuple(c * t ** w for c, w in zip(x.coeffs, x.algebra.weights)))


def structure_residual(T: BchTable, x: GroupPoint, y: GroupPoint, s: int) -> tuple:
    """Layer-s coefficients of (y^{-1} x) minus (x_s - y_s)."""
    if not 1 <= s <= T.algebra.step:
        raise ValueError(f"layer {s} outside 1..{T.algebra.step}")
    z = product(T, inverse(y), x)
    return tuple(zs - (xs - ys) for zs, xs, ys in zip(z.layer(s), x.layer(s), y.layer(s)))
