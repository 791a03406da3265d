"""Convex homogeneous quasi-norms on graded groups and their calibration.

Array arguments have shape ``(..., dim)``.  Float arrays are evaluated in
float64.  Object arrays of Fractions keep polynomial quantities (tau squared,
D) exact and evaluate roots with mpmath at 256 bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations

import mpmath
import numpy as np

from .algebra import GradedAlgebra, GroupPoint, fraction_str
from .group import BchTable, build_bch_table, dilate_batch, product_batch
from .parallel import chunks as _chunks, pmap as _map, stream as _stream

HP_PREC = 256
SKIP_BELOW = 1e-14


class CalibrationError(RuntimeError):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# array helpers


def _arr(x) -> np.ndarray:
    if isinstance(x, GroupPoint):
        if x.exact:
            out = np.empty(len(x.coeffs), dtype=object)
            out[:] = x.coeffs
            return out
        return np.asarray(x.coeffs, dtype=float)
    return np.asarray(x)


def _is_float(v) -> bool:
    return isinstance(v, (float, np.floating)) or (isinstance(v, np.ndarray) and v.dtype != object)


def _scalar(v):
    if isinstance(v, np.ndarray) and v.ndim == 0:
        v = v.item()
    if isinstance(v, np.floating):
        return float(v)
    return v


def _power(v, e: Fraction):
    """v ** e for v >= 0; exact when v is rational and e an integer."""
    e = Fraction(e)
    if _is_float(v):
        return np.power(v, float(e))
    if e.denominator == 1:
        if isinstance(v, np.ndarray):
            return v ** int(e)
        return v ** int(e)

    def one(a):
        with mpmath.workprec(HP_PREC):
            a = mpmath.mpf(a.numerator) / a.denominator if isinstance(a, Fraction) else mpmath.mpf(a)
            return mpmath.power(a, mpmath.mpf(e.numerator) / e.denominator)

    if isinstance(v, np.ndarray):
        out = np.empty(v.shape, dtype=object)
        for idx, a in np.ndenumerate(v):
            out[idx] = one(a)
        return out
    return one(v)


def _has_mp(v) -> bool:
    if isinstance(v, np.ndarray):
        return any(isinstance(a, mpmath.mpf) for a in v.flat)
    return isinstance(v, mpmath.mpf)


def _maximum(a, b):
    if _is_float(a) and _is_float(b):
        return np.maximum(a, b)
    if not (_has_mp(a) or _has_mp(b)):
        # both rational: stay exact
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            return np.maximum(a, b)
        return max(a, b)
    a, b = _to_hp(a), _to_hp(b)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.maximum(a, b)
    return max(a, b)


def _to_hp(v):
    if _is_float(v):
        return v
    if isinstance(v, np.ndarray):
        out = np.empty(v.shape, dtype=object)
        for idx, a in np.ndenumerate(v):
            out[idx] = _to_hp(a)
        return out
    if isinstance(v, Fraction):
        with mpmath.workprec(HP_PREC):
            return mpmath.mpf(v.numerator) / v.denominator
    return v


def _sq(v: np.ndarray):
    return (v * v).sum(axis=-1)


def _layer(A: GradedAlgebra, x: np.ndarray, i: int) -> np.ndarray:
    return x[..., A.layer_slice(i)]


# ---------------------------------------------------------------------------
# the pieces


def pair_sq(A: GradedAlgebra, x, y, i: int):
    """Squared Euclidean norm of (x_i, y_i)."""
    x, y = _arr(x), _arr(y)
    return _scalar(_sq(_layer(A, x, i)) + _sq(_layer(A, y, i)))


def tau_sq(A: GradedAlgebra, x, y):
    """Sum over ordered index pairs (n, m) of (x_{1,n} y_{1,m} - x_{1,m} y_{1,n})^2."""
    x1, y1 = _layer(A, _arr(x), 1), _layer(A, _arr(y), 1)
    total = 0
    for n, m in combinations(range(A.dims[0]), 2):
        t = x1[..., n] * y1[..., m] - x1[..., m] * y1[..., n]
        total = total + 2 * t * t
    return _scalar(total)


def tau(A: GradedAlgebra, x, y):
    return _scalar(_power(tau_sq(A, x, y), Fraction(1, 2)))


def tau_pair(A: GradedAlgebra, x, y, n: int, m: int):
    x1, y1 = _layer(A, _arr(x), 1), _layer(A, _arr(y), 1)
    return _scalar(x1[..., n - 1] * y1[..., m - 1] - x1[..., m - 1] * y1[..., n - 1])


def D(A: GradedAlgebra, s: int, x, y):
    if not 2 <= s <= A.step:
        raise ValueError(f"D_s needs 2 <= s <= {A.step}")
    x, y = _arr(x), _arr(y)
    pairs = {i: _sq(_layer(A, x, i)) + _sq(_layer(A, y, i)) for i in range(1, s + 1)}
    vals = {2: tau_sq(A, x, y) + pairs[2]}
    for top in range(3, s + 1):
        v = pairs[top]
        for low in range(1, top // 2 + 1):
            v = v + pairs[low] * vals[top - low]
        vals[top] = v
    return _scalar(vals[s])


def sn_power(A: GradedAlgebra, s: int, x, y):
    """SN_s(x, y) raised to the power 2s."""
    if not 2 <= s <= A.step:
        raise ValueError(f"SN_s needs 2 <= s <= {A.step}")
    x, y = _arr(x), _arr(y)
    half = _layer(A, y, 1) / 2 if _is_float(y) else _layer(A, y, 1) * Fraction(1, 2)
    best = _power(_sq(_layer(A, x, 1) - half), Fraction(s))
    for i in range(2, s + 1):
        best = _maximum(best, _power(_sq(_layer(A, x, i)) + _sq(_layer(A, y, i)), Fraction(s, i)))
    return _scalar(best)


def SN(A: GradedAlgebra, s: int, x, y):
    return _scalar(_power(sn_power(A, s, x, y), Fraction(1, 2 * s)))


# ---------------------------------------------------------------------------
# quasi-norms


@dataclass(frozen=True)
class CalibrationRecord:
    samples: int
    seed: int
    c_floor: float
    margins: dict[int, float]
    c_hat: dict[int, float]
    c_prime_hat: float | None = None


@dataclass(frozen=True)
class QuasiNormParams:
    algebra: GradedAlgebra
    lambdas: dict[int, Fraction]
    calibration: CalibrationRecord | None = None
    table: BchTable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if any(v <= 0 for v in self.lambdas.values()):
            raise ValueError("every lambda must be positive")
        if self.table is None:
            object.__setattr__(self, "table", build_bch_table(self.algebra))

    def lam(self, s: int):
        if s not in self.lambdas:
            raise KeyError(f"lambda_{s} is not set")
        return self.lambdas[s]

    def to_dict(self, schedule_note: dict | None = None) -> dict:
        cal = self.calibration
        out = {
            "lambda": {str(s): fraction_str(v) for s, v in sorted(self.lambdas.items())},
            "margins": {str(s): v for s, v in sorted(cal.margins.items())} if cal else {},
            "c_hat": min(cal.c_hat.values()) if cal and cal.c_hat else None,
            "c_hat_by_level": {str(s): v for s, v in sorted(cal.c_hat.items())} if cal else {},
            "c_floor": cal.c_floor if cal else None,
            "c_prime_hat": cal.c_prime_hat if cal else None,
            "seed": cal.seed if cal else None,
            "samples": cal.samples if cal else None,
        }
        if schedule_note:
            out.update(schedule_note)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def norm_powers(P: QuasiNormParams, s: int, x) -> dict[int, object]:
    """{s': N_{s'}(x)^{2s'}} for 1 <= s' <= s, with N_1 = ||x_1||."""
    A = P.algebra
    if not 1 <= s <= A.step:
        raise ValueError(f"N_s needs 1 <= s <= {A.step}")
    x = _arr(x)
    out = {1: _sq(_layer(A, x, 1))}
    for top in range(2, s + 1):
        lam = float(P.lam(top)) if _is_float(x) else P.lam(top)
        v = lam * _sq(_layer(A, x, top))
        for low in range((top + 1) // 2, top):
            v = v + _power(out[low], Fraction(top, low))
        out[top] = v
    return out


def norm_power(P: QuasiNormParams, s: int, x):
    """N_s(x)^{2s}."""
    return _scalar(norm_powers(P, s, x)[s])


def quasi_norm(P: QuasiNormParams, s: int, x):
    return _scalar(_power(norm_power(P, s, x), Fraction(1, 2 * s)))


def metric(P: QuasiNormParams, x, y):
    """d(x, y) = N_r(y^{-1} x)."""
    xa, ya = _arr(x), _arr(y)
    z = product_batch(P.table, -ya, xa)
    return quasi_norm(P, P.algebra.step, z)


# ---------------------------------------------------------------------------
# sampling


def reference_norm(A: GradedAlgebra, *points: np.ndarray) -> np.ndarray:
    """max over layers i of ||(p_i for all points)||^{1/i}; jointly 1-homogeneous."""
    best = None
    for i in range(1, A.step + 1):
        v = sum(_sq(_layer(A, p, i)) for p in points) ** (1.0 / (2 * i))
        best = v if best is None else np.maximum(best, v)
    return best


def sample_normalized(A: GradedAlgebra, rng: np.random.Generator, n: int, count: int) -> list[np.ndarray]:
    """``count`` arrays of n points each, uniform in [-1,1]^dim then jointly
    dilated so that the reference norm of each tuple equals 1."""
    pts = [rng.uniform(-1.0, 1.0, size=(n, A.dim)) for _ in range(count)]
    rho = reference_norm(A, *pts)
    rho = np.where(rho > 0, rho, 1.0)
    return [dilate_batch(A, 1.0 / rho, p) for p in pts]


# ---------------------------------------------------------------------------
# calibration and certification


@dataclass(frozen=True)
class MarginPolicy:
    c_floor: float = 1e-3
    max_halvings: int = 60


@dataclass
class _Level:
    """Lambda-independent pieces of the level-s inequality on a batch."""

    x: np.ndarray
    y: np.ndarray
    yx: np.ndarray       # y^{-1} x
    hyx: np.ndarray      # delta_{1/2}(y)^{-1} x
    base_rhs: np.ndarray  # SN_s^{2s} + D_s


def _prepare(T: BchTable, s: int, x: np.ndarray, y: np.ndarray) -> _Level:
    A = T.algebra
    yx = product_batch(T, -y, x)
    hyx = product_batch(T, -dilate_batch(A, 0.5, y), x)
    return _Level(x, y, yx, hyx, sn_power(A, s, x, y) + D(A, s, x, y))


def _sides(P: QuasiNormParams, s: int, L: _Level) -> tuple[np.ndarray, np.ndarray]:
    nx = norm_power(P, s, L.x)
    nyx = norm_power(P, s, L.yx)
    ny = norm_power(P, s, L.y)
    lhs = (nx + nyx) / 2 - ny / 4 ** s
    rhs = L.base_rhs + norm_power(P, s, L.hyx)
    return lhs, rhs


def calibrate(A: GradedAlgebra, sample_count: int, seed: int,
              margin_policy: MarginPolicy = MarginPolicy(), workers: int = 1) -> QuasiNormParams:
    """Choose lambda_s (s = 2..r) by halving from 1 until the convexity
    inequality holds with constant ``c_floor`` on every sample."""
    if A.step < 2:
        raise ValueError("calibration needs step >= 2")
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    T = build_bch_table(A)
    rng = _stream(seed, 0)
    x, y = sample_normalized(A, rng, sample_count, 2)
    c = margin_policy.c_floor
    lambdas: dict[int, Fraction] = {}
    margins: dict[int, float] = {}
    c_hat: dict[int, float] = {}
    for s in range(2, A.step + 1):
        L = _prepare(T, s, x, y)
        lam = Fraction(1)
        for _ in range(margin_policy.max_halvings + 1):
            P = QuasiNormParams(A, {**lambdas, s: lam}, table=T)
            lhs, rhs = _sides(P, s, L)
            slack = lhs - c * rhs
            if np.all(slack >= 0):
                break
            lam /= 2
        else:
            k = int(np.argmin(slack))
            raise CalibrationError(
                f"level {s} not certified after {margin_policy.max_halvings} halvings",
                (x[k].tolist(), y[k].tolist()))
        lambdas[s] = lam
        margins[s] = float(slack.min())
        ok = rhs > SKIP_BELOW
        c_hat[s] = float((lhs[ok] / rhs[ok]).min())
    record = CalibrationRecord(sample_count, seed, c, margins, c_hat)
    return QuasiNormParams(A, lambdas, record, table=T)


@dataclass(frozen=True)
class CertificationReport:
    samples: int
    seed: int
    c: float
    violations: int
    min_margin: dict[int, float]
    witness: tuple | None


def certify(P: QuasiNormParams, sample_count: int, seed: int, c: float | None = None,
            chunk: int = 100_000, workers: int = 1) -> CertificationReport:
    """Count sampled pairs violating the level-s inequality for any s."""
    A = P.algebra
    if c is None:
        c = P.calibration.c_floor if P.calibration else MarginPolicy().c_floor

    def run(item):
        index, n = item
        x, y = sample_normalized(A, _stream(seed, index), n, 2)
        bad, mins, witness = 0, {}, None
        for s in range(2, A.step + 1):
            lhs, rhs = _sides(P, s, _prepare(P.table, s, x, y))
            slack = lhs - c * rhs
            mins[s] = float(slack.min())
            viol = slack < 0
            bad += int(viol.sum())
            if witness is None and viol.any():
                k = int(np.argmax(viol))
                witness = (s, x[k].tolist(), y[k].tolist())
        return bad, mins, witness

    results = _map(run, _chunks(sample_count, chunk), workers)
    mins = {s: min(r[1][s] for r in results) for s in range(2, A.step + 1)}
    witness = next((r[2] for r in results if r[2] is not None), None)
    return CertificationReport(sample_count, seed, c, sum(r[0] for r in results), mins, witness)


@dataclass(frozen=True)
class FourPointReport:
    p: float
    samples: int
    seed: int
    c_prime_hat: float
    min_margin: float
    skipped: int
    witness: tuple


def check_fourpoint(P: QuasiNormParams, p: float, sample_count: int, seed: int,
                    chunk: int = 100_000, workers: int = 1) -> FourPointReport:
    """Minimum over sampled quadruples (w, x, y, z) of

        [(2 d(y,x)^{2p} + d(y,w)^{2p} + d(y,z)^{2p})/2 - (d(x,w)/2)^{2p} - (d(x,z)/2)^{2p}]
        / d(w,z)^{2p}.
    """
    A = P.algebra
    r = A.step
    if p < r:
        raise ValueError(f"four-point exponent needs p >= {r}")
    q = 2 * p
    T = P.table

    def dist(a, b):
        return norm_power(P, r, product_batch(T, -b, a)) ** (q / (2 * r))

    def run(item):
        index, n = item
        w, x, y, z = sample_normalized(A, _stream(seed, index), n, 4)
        num = (2 * dist(y, x) + dist(y, w) + dist(y, z)) / 2 - dist(x, w) / 2 ** q - dist(x, z) / 2 ** q
        den = dist(w, z)
        ok = den > SKIP_BELOW
        ratio = np.full(n, np.inf)
        ratio[ok] = num[ok] / den[ok]
        k = int(np.argmin(ratio))
        return (float(ratio[k]), float(num[ok].min()) if ok.any() else np.inf,
                int((~ok).sum()), (w[k].tolist(), x[k].tolist(), y[k].tolist(), z[k].tolist()))

    results = _map(run, _chunks(sample_count, chunk), workers)
    best = min(results, key=lambda res: res[0])
    return FourPointReport(p, sample_count, seed, best[0], min(r_[1] for r_ in results),
                           sum(r_[2] for r_ in results), best[3])


def with_fourpoint(P: QuasiNormParams, sample_count: int, seed: int, workers: int = 1) -> QuasiNormParams:
    """Copy of P whose calibration record carries c' at exponent p = r."""
    rep = check_fourpoint(P, P.algebra.step, sample_count, seed, workers=workers)
    return replace(P, calibration=replace(P.calibration, c_prime_hat=rep.c_prime_hat))
