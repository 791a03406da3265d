"""Graded nilpotent Lie algebras given by structure constants.

Basis vectors are addressed either as ``(layer, index)`` with both parts
1-based, or by a flat 0-based position running through the layers in order.
Only brackets of ordered pairs ``a < b`` are stored; the other half is
generated by antisymmetry.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product as iproduct
from typing import Iterable, Mapping, Sequence

MAX_STEP = 6

Scalar = Fraction | float


class AlgebraError(ValueError):
    """Raised when a structure-constant table violates an algebra axiom.

    ``axiom`` is one of ``"index range"``, ``"antisymmetry"``, ``"grading"``,
    ``"jacobi"``, ``"dims"``, ``"stratification"``, ``"step"``.
    """

    def __init__(self, axiom: str, message: str, witness=None):
        super().__init__(f"{axiom}: {message}")
        self.axiom = axiom
        self.witness = witness


def as_fraction(value) -> Fraction:
    """Parse ints, Fractions and "p/q" strings; floats are rejected."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a scalar")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def fraction_str(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _is_exact(value) -> bool:
    return isinstance(value, (Fraction, int)) and not isinstance(value, bool)


@dataclass(frozen=True)
class GradedAlgebra:
    dims: tuple[int, ...]
    # ((a, b), ((c, coef), ...)) with a < b, flat indices, nonzero outputs only
    structure: tuple[tuple[tuple[int, int], tuple[tuple[int, Fraction], ...]], ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        offsets = [0]
        for k in self.dims:
            offsets.append(offsets[-1] + k)
        layer_of = []
        for i, k in enumerate(self.dims, start=1):
            layer_of.extend([i] * k)
        table: dict[tuple[int, int], tuple[tuple[int, Fraction], ...]] = {}
        constants = []
        for (a, b), out in self.structure:
            table[(a, b)] = out
            table[(b, a)] = tuple((c, -v) for c, v in out)
            for c, v in out:
                constants.append((a, b, c, v))
                constants.append((b, a, c, -v))
        object.__setattr__(self, "_offsets", tuple(offsets))
        object.__setattr__(self, "_layer_of", tuple(layer_of))
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_constants", tuple(constants))

    # -- shape ---------------------------------------------------------------
    @property
    def step(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return self._offsets[-1]

    @property
    def weights(self) -> tuple[int, ...]:
        """Graded weight (layer number) of every flat coordinate."""
        return self._layer_of

    @property
    def constants(self) -> tuple[tuple[int, int, int, Fraction], ...]:
        """All nonzero ``(a, b, c, coef)`` with ``[e_a, e_b] = sum coef e_c``."""
        return self._constants

    def layer_slice(self, i: int) -> slice:
        if not 1 <= i <= self.step:
            raise IndexError(f"layer {i} outside 1..{self.step}")
        return slice(self._offsets[i - 1], self._offsets[i])

    def flat(self, i: int, n: int) -> int:
        if not 1 <= i <= self.step or not 1 <= n <= self.dims[i - 1]:
            raise IndexError(f"basis vector ({i},{n}) out of range")
        return self._offsets[i - 1] + n - 1

    def unflat(self, a: int) -> tuple[int, int]:
        i = self._layer_of[a]
        return i, a - self._offsets[i - 1] + 1

    def basis_bracket(self, a: int, b: int) -> tuple[tuple[int, Fraction], ...]:
        return self._table.get((a, b), ())

    # -- points --------------------------------------------------------------
    def point(self, coeffs: Iterable) -> "GroupPoint":
        return GroupPoint(self, tuple(coeffs))

    def zero(self, exact: bool = True) -> "GroupPoint":
        z = Fraction(0) if exact else 0.0
        return GroupPoint(self, (z,) * self.dim)

    def basis(self, i: int, n: int) -> "GroupPoint":
        coeffs = [Fraction(0)] * self.dim
        coeffs[self.flat(i, n)] = Fraction(1)
        return GroupPoint(self, tuple(coeffs))

    def from_layers(self, *layers: Sequence) -> "GroupPoint":
        if len(layers) != self.step:
            raise ValueError(f"expected {self.step} layers, got {len(layers)}")
        coeffs = []
        for k, layer in zip(self.dims, layers):
            if len(layer) != k:
                raise ValueError("layer length does not match dims")
            coeffs.extend(layer)
        return self.point(coeffs)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        brackets = []
        for (a, b), out in self.structure:
            i, n = self.unflat(a)
            j, m = self.unflat(b)
            off = self._offsets[i + j - 1]
            brackets.append({
                "left": [i, n],
                "right": [j, m],
                "out": [[fraction_str(v), c - off + 1] for c, v in out],
            })
        return {"step": self.step, "dims": list(self.dims), "brackets": brackets}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class GroupPoint:
    """Coefficient vector over an algebra, read as a group element."""

    algebra: GradedAlgebra
    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) != self.algebra.dim:
            raise ValueError(
                f"expected {self.algebra.dim} coefficients, got {len(self.coeffs)}"
            )
        if all(_is_exact(c) for c in self.coeffs):
            object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in self.coeffs))
        else:
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.coeffs)

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "float"

    def layer(self, i: int) -> tuple:
        return self.coeffs[self.algebra.layer_slice(i)]

    def component(self, i: int, j: int):
        return self.coeffs[self.algebra.flat(i, j)]

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def _check(self, other: "GroupPoint"):
        if other.algebra != self.algebra:
            raise ValueError("points live over different algebras")

    def __add__(self, other: "GroupPoint") -> "GroupPoint":
        self._check(other)
        return GroupPoint(self.algebra, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "GroupPoint") -> "GroupPoint":
        self._check(other)
        return GroupPoint(self.algebra, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "GroupPoint":
        return GroupPoint(self.algebra, tuple(-a for a in self.coeffs))

    def __rmul__(self, scalar) -> "GroupPoint":
        return GroupPoint(self.algebra, tuple(scalar * a for a in self.coeffs))

    def __repr__(self) -> str:
        parts = []
        for i in range(1, self.algebra.step + 1):
            parts.append(",".join(
                fraction_str(c) if isinstance(c, Fraction) else repr(c) for c in self.layer(i)
            ))
        return f"GroupPoint({'; '.join(parts)})"


def bracket(A: GradedAlgebra, x: GroupPoint, y: GroupPoint) -> GroupPoint:
    if x.algebra != A or y.algebra != A:
        raise ValueError("algebra mismatch")
    if x.exact != y.exact:
        raise ValueError("scalar mode mismatch")
    zero = Fraction(0) if x.exact else 0.0
    out = [zero] * A.dim
    xs, ys = x.coeffs, y.coeffs
    for a, b, c, v in A.constants:
        if xs[a] and ys[b]:
            out[c] += v * xs[a] * ys[b]
    return GroupPoint(A, tuple(out))


# ---------------------------------------------------------------------------
# construction and validation


def _rank(rows: list[list[Fraction]]) -> int:
    return len(_rref(rows)[0])


def _rref(rows: list[list[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form over the rationals; returns (rows, pivots)."""
    m = [list(r) for r in rows if any(r)]
    pivots: list[int] = []
    if not m:
        return [], []
    ncols = len(m[0])
    row = 0
    for col in range(ncols):
        pivot = next((k for k in range(row, len(m)) if m[k][col] != 0), None)
        if pivot is None:
            continue
        m[row], m[pivot] = m[pivot], m[row]
        inv = 1 / m[row][col]
        m[row] = [v * inv for v in m[row]]
        for k in range(len(m)):
            if k != row and m[k][col] != 0:
                f = m[k][col]
                m[k] = [u - f * v for u, v in zip(m[k], m[row])]
        pivots.append(col)
        row += 1
        if row == len(m):
            break
    return m[:row], pivots


def _jacobi_witness(A: GradedAlgebra):
    for a, b, c in combinations(range(A.dim), 3):
        total: dict[int, Fraction] = {}
        for p, q, s in ((a, b, c), (b, c, a), (c, a, b)):
            for e, v in A.basis_bracket(q, s):
                for f, w in A.basis_bracket(p, e):
                    total[f] = total.get(f, Fraction(0)) + v * w
        if any(total.values()):
            return a, b, c
    return None


def _from_flat_table(dims: Sequence[int], entries: Mapping[tuple[int, int], Mapping[int, Fraction]],
                     name: str = "") -> GradedAlgebra:
    """Build from a flat table already known to be antisymmetric-consistent."""
    structure = []
    for (a, b) in sorted(entries):
        out = tuple((c, v) for c, v in sorted(entries[(a, b)].items()) if v != 0)
        if out:
            structure.append(((a, b), out))
    A = GradedAlgebra(tuple(dims), tuple(structure), name)
    witness = _jacobi_witness(A)
    if witness is not None:
        raise AlgebraError("jacobi", f"Jacobi sum nonzero on basis triple {_named(A, witness)}",
                           witness)
    return A


def _named(A: GradedAlgebra, flats) -> tuple:
    return tuple(A.unflat(a) for a in flats)


def build_algebra(data: Mapping, name: str = "") -> GradedAlgebra:
    """Validate a structure-constant table and build the algebra.

    ``data`` follows the JSON layout ``{"step", "dims", "brackets"}``; each
    bracket entry gives ``left``/``right`` as ``[layer, index]`` and ``out`` as
    ``[[coefficient, index-in-layer], ...]`` on the layer ``left + right``.
    """
    dims = [int(k) for k in data.get("dims", [])]
    step = int(data.get("step", len(dims)))
    if not dims or any(k < 1 for k in dims):
        raise AlgebraError("dims", f"layer dimensions must be positive, got {dims}")
    if step != len(dims):
        raise AlgebraError("dims", f"step {step} does not match {len(dims)} layers")
    if step > MAX_STEP:
        raise AlgebraError("step", f"step {step} exceeds supported maximum {MAX_STEP}")
    shape = GradedAlgebra(tuple(dims), ())

    given: dict[tuple[int, int], dict[int, Fraction]] = {}
    for entry in data.get("brackets", []):
        try:
            i, n = (int(v) for v in entry["left"])
            j, m = (int(v) for v in entry["right"])
        except (KeyError, TypeError, ValueError) as exc:
            raise AlgebraError("index range", f"malformed bracket entry {entry!r}") from exc
        try:
            a, b = shape.flat(i, n), shape.flat(j, m)
        except IndexError as exc:
            raise AlgebraError("index range", str(exc), entry) from exc
        out: dict[int, Fraction] = {}
        for pair in entry.get("out", []):
            coef, idx = as_fraction(pair[0]), int(pair[1])
            if coef == 0:
                continue
            if i + j > step:
                raise AlgebraError(
                    "grading", f"[U_({i},{n}),U_({j},{m})] lands beyond step {step}", entry)
            if not 1 <= idx <= dims[i + j - 1]:
                raise AlgebraError(
                    "index range", f"output index {idx} outside layer {i + j}", entry)
            c = shape.flat(i + j, idx)
            out[c] = out.get(c, Fraction(0)) + coef
        out = {c: v for c, v in out.items() if v != 0}
        if (a, b) in given:
            raise AlgebraError("antisymmetry", f"pair ({i},{n}),({j},{m}) given twice", entry)
        given[(a, b)] = out

    entries: dict[tuple[int, int], dict[int, Fraction]] = {}
    for (a, b), out in given.items():
        if a == b:
            if out:
                raise AlgebraError(
                    "antisymmetry", f"[U,U] nonzero for U = U_{shape.unflat(a)}", (a, a))
            continue
        if (b, a) in given:
            partner = given[(b, a)]
            keys = set(out) | set(partner)
            if any(out.get(c, 0) != -partner.get(c, 0) for c in keys):
                raise AlgebraError(
                    "antisymmetry",
                    f"[U_{shape.unflat(a)},U_{shape.unflat(b)}] is not the negation of its partner",
                    (a, b))
        lo, hi = min(a, b), max(a, b)
        entries[(lo, hi)] = out if a < b else {c: -v for c, v in out.items()}
    return _from_flat_table(dims, entries, name)


def load_algebra(path: str) -> GradedAlgebra:
    with open(path) as fh:
        return build_algebra(json.load(fh), name=path)


# ---------------------------------------------------------------------------
# built-in families


def _table_algebra(dims, brackets, name) -> GradedAlgebra:
    """``brackets`` lists ((i,n),(j,m),[(coef,(k,l)),...]) with k == i+j."""
    data = {"step": len(dims), "dims": list(dims), "brackets": []}
    for left, right, outs in brackets:
        data["brackets"].append({
            "left": list(left), "right": list(right),
            "out": [[coef, idx[1]] for coef, idx in outs],
        })
    return build_algebra(data, name=name)


def abelian(*dims: int) -> GradedAlgebra:
    return _table_algebra(dims, [], f"abelian{tuple(dims)}")


def filiform(r: int) -> GradedAlgebra:
    """Basis X, Y_1 in layer 1 and Y_i in layer i, with [X, Y_i] = Y_{i+1}."""
    if r < 1:
        raise ValueError("filiform step must be >= 1")
    dims = (2,) + (1,) * (r - 1)
    brackets = [((1, 1), (1, 2), [(1, (2, 1))])] if r >= 2 else []
    for i in range(2, r):
        brackets.append(((1, 1), (i, 1), [(1, (i + 1, 1))]))
    return _table_algebra(dims, brackets, f"filiform({r})")


def jet_algebra(r: int) -> GradedAlgebra:
    """Lie algebra of the jet group of order r-1 over the line.

    Layer 1 holds X and U_{r-1}; layer k holds U_{r-k}.  Left-invariant
    fields satisfy [X, U_j] = -U_{j-1}.
    """
    if r < 1:
        raise ValueError("jet algebra step must be >= 1")
    dims = (2,) + (1,) * (r - 1)
    brackets = [((1, 1), (1, 2), [(-1, (2, 1))])] if r >= 2 else []
    for i in range(2, r):
        brackets.append(((1, 1), (i, 1), [(-1, (i + 1, 1))]))
    return _table_algebra(dims, brackets, f"jet_algebra({r})")


def remark_step4() -> GradedAlgebra:
    """Step-4 algebra with dims (2,1,2,1) whose only step-4 subquotients are itself."""
    brackets = [
        ((1, 1), (1, 2), [(1, (2, 1))]),
        ((1, 1), (2, 1), [(1, (3, 1))]),
        ((1, 2), (2, 1), [(1, (3, 2))]),
        ((1, 1), (3, 1), [(1, (4, 1))]),
        ((1, 2), (3, 2), [(1, (4, 1))]),
    ]
    return _table_algebra((2, 1, 2, 1), brackets, "remark_step4")


def builtin(name: str, *params: int) -> GradedAlgebra:
    """Look up a built-in algebra; ``name`` may carry params, e.g. ``"filiform(4)"``."""
    name = name.strip().lower()
    if "(" in name:
        head, _, rest = name.partition("(")
        inner = rest.rstrip(")").strip()
        params = tuple(int(v) for v in inner.split(",") if v.strip()) + tuple(params)
        name = head.strip()
    if name == "heisenberg":
        return filiform(2)
    if name == "engel":
        return filiform(3)
    if name == "remark_step4":
        return remark_step4()
    if name in ("abelian", "filiform", "jet_algebra"):
        if not params:
            raise ValueError(f"{name} needs parameters")
        if name == "abelian":
            return abelian(*params)
        if params[0] < 1:
            raise ValueError("r must be >= 1")
        return filiform(params[0]) if name == "filiform" else jet_algebra(params[0])
    raise ValueError(f"unknown algebra {name!r}")


def resolve_algebra(source: str) -> GradedAlgebra:
    """Built-in name, or path to a JSON structure-constant file."""
    try:
        return builtin(source)
    except ValueError:
        if source.endswith(".json"):
            return load_algebra(source)
        raise


# ---------------------------------------------------------------------------
# graded maps


@dataclass(frozen=True)
class GradedMap:
    source: GradedAlgebra
    target: GradedAlgebra
    # matrices[i-1][row][col]: target layer-i coordinate ``row`` from source coordinate ``col``
    matrices: tuple[tuple[tuple[Fraction, ...], ...], ...]

    def __post_init__(self):
        if len(self.matrices) != self.source.step:
            raise ValueError("one matrix per source layer is required")
        for i, mat in enumerate(self.matrices, start=1):
            rows = self.target.dims[i - 1] if i <= self.target.step else 0
            if len(mat) != rows or any(len(row) != self.source.dims[i - 1] for row in mat):
                raise ValueError(f"layer {i} matrix has the wrong shape")

    def apply(self, x: GroupPoint) -> GroupPoint:
        if x.algebra != self.source:
            raise ValueError("point is not over the source algebra")
        zero = Fraction(0) if x.exact else 0.0
        out = []
        for i in range(1, self.target.step + 1):
            xi = x.layer(i) if i <= self.source.step else ()
            mat = self.matrices[i - 1] if i <= self.source.step else ()
            for row in mat:
                out.append(sum((c * v for c, v in zip(row, xi)), zero))
            if i > self.source.step:
                out.extend([zero] * self.target.dims[i - 1])
        return GroupPoint(self.target, tuple(out))

    def bracket_defect(self):
        """First source basis pair whose bracket is not preserved, or None."""
        S = self.source
        for a, b in combinations(range(S.dim), 2):
            ea, eb = _unit(S, a), _unit(S, b)
            lhs = self.apply(bracket(S, ea, eb))
            rhs = bracket(self.target, self.apply(ea), self.apply(eb))
            if lhs != rhs:
                return S.unflat(a), S.unflat(b)
        return None

    def respects_brackets(self) -> bool:
        return self.bracket_defect() is None

    def image(self, i: int, n: int) -> GroupPoint:
        return self.apply(self.source.basis(i, n))


def _unit(A: GradedAlgebra, a: int) -> GroupPoint:
    coeffs = [Fraction(0)] * A.dim
    coeffs[a] = Fraction(1)
    return GroupPoint(A, tuple(coeffs))


def identity_map(A: GradedAlgebra) -> GradedMap:
    mats = tuple(
        tuple(tuple(Fraction(int(r == c)) for c in range(k)) for r in range(k)) for k in A.dims
    )
    return GradedMap(A, A, mats)


def quotient_by_top_subspace(A: GradedAlgebra, S: Sequence[Sequence]) -> tuple[GradedAlgebra, GradedMap]:
    """Quotient by a subspace of the top layer spanned by the rows of ``S``.

    Each spanning vector is either a top-layer coordinate vector (length
    ``k_r``) or a full coordinate vector / GroupPoint supported on layer r.
    """
    r, kr = A.step, A.dims[-1]
    top = A.layer_slice(r)
    vectors = []
    for v in S:
        coeffs = v.coeffs if isinstance(v, GroupPoint) else tuple(v)
        if len(coeffs) == A.dim:
            if any(c != 0 for k, c in enumerate(coeffs) if not top.start <= k < top.stop):
                raise AlgebraError("grading", "subspace is not inside the top layer", v)
            coeffs = coeffs[top]
        elif len(coeffs) != kr:
            raise AlgebraError("index range", f"spanning vector has length {len(coeffs)}", v)
        vectors.append([as_fraction(c) for c in coeffs])

    rows, pivots = _rref(vectors)
    free = [c for c in range(kr) if c not in pivots]
    # projection: top coordinate vector -> coordinates on the free columns
    proj = []
    for c in free:
        row = [Fraction(0)] * kr
        row[c] = Fraction(1)
        for rw, p in zip(rows, pivots):
            row[p] -= rw[c]
        proj.append(tuple(row))
    new_dims = list(A.dims[:-1]) + ([len(free)] if free else [])
    if not new_dims:
        raise AlgebraError("dims", "quotient would be the zero algebra")
    new_off = [0]
    for k in new_dims:
        new_off.append(new_off[-1] + k)
    top_start = top.start

    entries: dict[tuple[int, int], dict[int, Fraction]] = {}
    for (a, b), out in A.structure:
        image: dict[int, Fraction] = {}
        for c, v in out:
            if c < top_start:
                image[c] = image.get(c, Fraction(0)) + v
            else:
                for q, prow in enumerate(proj):
                    w = prow[c - top_start]
                    if w:
                        image[top_start + q] = image.get(top_start + q, Fraction(0)) + v * w
        image = {c: v for c, v in image.items() if v != 0}
        if image:
            entries[(a, b)] = image
    Q = _from_flat_table(new_dims, entries, name=f"{A.name}/S" if A.name else "")
    mats = list(identity_map(A).matrices[:-1]) + [tuple(proj)]
    return Q, GradedMap(A, Q, tuple(mats))


# ---------------------------------------------------------------------------
# stratification and filiform subquotients


def _layer_vectors(x: GroupPoint, i: int) -> list[Fraction]:
    return list(x.layer(i))


def stratification_defect(A: GradedAlgebra):
    """First layer i+1 not spanned by [layer 1, layer i], or None."""
    for i in range(1, A.step):
        rows = []
        for n in range(1, A.dims[0] + 1):
            for m in range(1, A.dims[i - 1] + 1):
                rows.append(_layer_vectors(bracket(A, A.basis(1, n), A.basis(i, m)), i + 1))
        if _rank(rows) < A.dims[i]:
            return i + 1
    return None


@dataclass(frozen=True)
class FiliformEmbedding:
    """A graded quotient of A (identity when none is needed) and an embedding
    of the model filiform algebra of the same step into it."""

    quotient: GradedMap
    embedding: GradedMap


def _column_map(source: GradedAlgebra, target: GradedAlgebra, images: Sequence[GroupPoint]) -> GradedMap:
    """Graded map sending the i-th source basis vector (flat order) to images[i]."""
    mats = []
    for i in range(1, source.step + 1):
        cols = [images[source.flat(i, n)].layer(i) for n in range(1, source.dims[i - 1] + 1)]
        mats.append(tuple(tuple(col[row] for col in cols) for row in range(target.dims[i - 1])))
    return GradedMap(source, target, tuple(mats))


def _candidate_vectors(A: GradedAlgebra, count: int, rng: random.Random, size: int):
    for _ in range(count):
        yield tuple(
            A.point([Fraction(rng.randint(-2, 2)) if A.weights[k] == 1 else Fraction(0)
                     for k in range(A.dim)])
            for _ in range(size)
        )


def find_filiform_embedding(A: GradedAlgebra, random_trials: int = 200, seed: int = 0) -> FiliformEmbedding:
    if A.step not in (2, 3):
        raise AlgebraError("step", f"filiform embedding search needs step 2 or 3, got {A.step}")
    bad = stratification_defect(A)
    if bad is not None:
        raise AlgebraError("stratification", f"layer {bad} is not generated by layer 1", bad)
    rng = random.Random(seed)
    horizontal = [A.basis(1, n) for n in range(1, A.dims[0] + 1)]

    if A.step == 2:
        H = filiform(2)
        candidates = iproduct(horizontal, repeat=2)
        for U, V in _chain(candidates, _candidate_vectors(A, random_trials, rng, 2)):
            W = bracket(A, U, V)
            if not W.is_zero():
                emb = _column_map(H, A, [U, V, W])
                _verify(emb)
                return FiliformEmbedding(identity_map(A), emb)
        raise AlgebraError("stratification", "no pair with nonzero bracket found")

    quotient = identity_map(A)
    B = A
    if A.dims[-1] > 1:
        kr = A.dims[-1]
        span = [[Fraction(int(c == n)) for c in range(kr)] for n in range(1, kr)]
        B, quotient = quotient_by_top_subspace(A, span)
    horizontal = [B.basis(1, n) for n in range(1, B.dims[0] + 1)]
    W = B.basis(3, 1)
    E = filiform(3)

    def w_coeff(x: GroupPoint) -> Fraction:
        return x.component(3, 1)

    triples = iproduct(horizontal, repeat=3)
    for U1, U2, U3 in _chain(triples, _candidate_vectors(B, random_trials, rng, 3)):
        for Z1, Z2 in ((U1, U2), (U1, U3), (U2, U3), (U3, U2), (U1 + U2, U3), (U1 + U3, U2)):
            Z12 = bracket(B, Z1, Z2)
            z = w_coeff(bracket(B, Z1, Z12))
            if z == 0:
                continue
            zp = w_coeff(bracket(B, Z2, Z12))
            images = [Z1, Z2 - (zp / z) * Z1, Z12, z * W]
            emb = _column_map(E, B, images)
            _verify(emb)
            return FiliformEmbedding(quotient, emb)
    raise AlgebraError("stratification", "no Engel triple found within the search budget")


def _chain(*iters):
    for it in iters:
        yield from it


def _verify(m: GradedMap):
    defect = m.bracket_defect()
    if defect is not None:
        raise AssertionError(f"constructed map does not respect the bracket on {defect}")
