"""Command-line entry point: ``python -m carnot_markov <group> <command> [flags]``.

Exit status is 0 when every check passes, 1 on a property violation and 2
on usage or I/O errors.  Outputs depend only on the flags (including the
seed) and always record the tool version and any schedule involved.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from fractions import Fraction

from . import __version__
from .algebra import AlgebraError, as_fraction, find_filiform_embedding, fraction_str, resolve_algebra, stratification_defect
from .embedding import build_embedding, check_endpoints, check_separation, moment_bound_check
from .graphs import build_schedule, export_edge_list
from .group import build_bch_table, inverse, product
from .jetspace import JetPoint, build_phi, identity, jet_dilate, jet_inverse, jet_product, verify_phi
from .markov import truncation_bound, exact_functional_graph, lower, scaling_report
from .norms import CalibrationError, MarginPolicy, calibrate, certify, check_fourpoint

PASS, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output


def _plain(v):
    if isinstance(v, Fraction):
        return fraction_str(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, int, float, str)) or v is None:
        return v
    return str(v)


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    payload = {**payload, "version": __version__, "seed": getattr(args, "seed", None)}
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        meta = {k: v for k, v in payload.items() if not isinstance(v, (list, dict))}
        if "schedule" in payload:
            meta["schedule"] = ",".join(map(str, payload["schedule"]))
        buf.write("# " + " ".join(f"{k}={_plain(v)}" for k, v in meta.items()) + "\n")
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})
        text = buf.getvalue()
    else:
        text = json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _positive(name: str, value: int | None) -> int:
    if value is None or value < 1:
        raise UsageError(f"--{name} must be a positive integer")
    return value


def _algebra(args):
    if not args.algebra:
        raise UsageError("--algebra is required")
    try:
        return resolve_algebra(args.algebra)
    except OSError as exc:
        raise UsageError(f"cannot read {args.algebra}: {exc}") from exc


def _point(A, text: str):
    try:
        coeffs = [as_fraction(v) for v in text.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad coordinates {text!r}") from exc
    if len(coeffs) != A.dim:
        raise UsageError(f"expected {A.dim} coordinates, got {len(coeffs)}")
    return A.point(coeffs)


def _rand_fraction(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-9, 9), rng.randint(1, 6))


# ---------------------------------------------------------------------------
# algebra / group


def cmd_algebra_validate(args) -> int:
    try:
        A = _algebra(args)
    except AlgebraError as exc:
        _emit(args, {"algebra": args.algebra, "valid": False, "axiom": exc.axiom,
                     "message": str(exc), "witness": exc.witness})
        return FAIL
    defect = stratification_defect(A)
    _emit(args, {"algebra": A.name or args.algebra, "valid": True, "dims": list(A.dims),
                 "step": A.step, "stratified": defect is None, "stratification_witness": defect})
    return PASS


def cmd_algebra_info(args) -> int:
    A = _algebra(args)
    T = build_bch_table(A)
    out = {"algebra": A.name or args.algebra, "dims": list(A.dims), "step": A.step,
           "weights": list(A.weights), "bch_terms": T.describe(), "structure": A.to_dict()}
    if A.step >= 2:
        try:
            emb = find_filiform_embedding(A, seed=args.seed)
            out["filiform_quotient_dims"] = list(emb.quotient.target.dims)
        except (ValueError, AlgebraError) as exc:
            out["filiform_quotient_dims"] = None
            out["filiform_note"] = str(exc)
    _emit(args, out)
    return PASS


def cmd_group_product(args) -> int:
    A = _algebra(args)
    if not args.x or not args.y:
        raise UsageError("--x and --y are required")
    T = build_bch_table(A)
    x, y = _point(A, args.x), _point(A, args.y)
    _emit(args, {"algebra": A.name, "x": list(x.coeffs), "y": list(y.coeffs),
                 "product": list(product(T, x, y).coeffs)})
    return PASS


def cmd_group_check(args) -> int:
    A = _algebra(args)
    n = _positive("samples", args.samples)
    T = build_bch_table(A)
    rng = random.Random(args.seed)
    e = A.zero()
    failures = []
    for i in range(n):
        x, y, z = (A.point([_rand_fraction(rng) for _ in range(A.dim)]) for _ in range(3))
        checks = {
            "associativity": product(T, product(T, x, y), z) == product(T, x, product(T, y, z)),
            "identity": product(T, x, e) == x and product(T, e, x) == x,
            "inverse": product(T, x, inverse(x)).is_zero() and product(T, inverse(x), x).is_zero(),
        }
        for name, ok in checks.items():
            if not ok:
                failures.append({"sample": i, "axiom": name, "x": list(x.coeffs), "y": list(y.coeffs),
                                 "z": list(z.coeffs)})
    _emit(args, {"algebra": A.name, "samples": n, "violations": len(failures),
                 "witness": failures[0] if failures else None})
    return FAIL if failures else PASS


# ---------------------------------------------------------------------------
# norms


def cmd_norm_calibrate(args) -> int:
    A = _algebra(args)
    n = _positive("samples", args.samples)
    if A.step < 2:
        raise UsageError("calibration needs an algebra of step >= 2")
    try:
        P = calibrate(A, n, args.seed, MarginPolicy(), workers=args.threads)
    except CalibrationError as exc:
        _emit(args, {"algebra": A.name, "certified": False, "message": str(exc),
                     "witness": getattr(exc, "witness", None)})
        return FAIL
    cert_n = args.certify_samples if args.certify_samples is not None else n
    cert = certify(P, cert_n, args.seed + 1, workers=args.threads)
    out = P.to_dict()
    out.update(algebra=A.name, certified=cert.violations == 0,
               certification={"samples": cert.samples, "seed": cert.seed,
                              "violations": cert.violations, "min_margin": cert.min_margin,
                              "witness": cert.witness})
    _emit(args, out)
    return PASS if cert.violations == 0 else FAIL


def cmd_norm_fourpoint(args) -> int:
    A = _algebra(args)
    n = _positive("samples", args.samples)
    p = float(args.p) if args.p is not None else float(A.step)
    if p < A.step:
        raise UsageError(f"--p must be at least the step {A.step}")
    P = calibrate(A, min(n, 100_000), args.seed, workers=args.threads)
    rep = check_fourpoint(P, p, n, args.seed, workers=args.threads)
    _emit(args, {"algebra": A.name, "p": p, "samples": n, "lambda": P.lambdas,
                 "c_prime_hat": rep.c_prime_hat, "skipped": rep.skipped,
                 "passed": rep.c_prime_hat > 0, "witness": rep.witness if rep.c_prime_hat <= 0 else None})
    return PASS if rep.c_prime_hat > 0 else FAIL


# ---------------------------------------------------------------------------
# jets


def _r(args) -> int:
    if args.r is None or not 1 <= args.r <= 6:
        raise UsageError("--r must lie in 1..6")
    return args.r


def cmd_jet_check(args) -> int:
    r = _r(args)
    n = _positive("samples", args.samples)
    rng = random.Random(args.seed)
    e = identity(r)
    bad = []
    for i in range(n):
        p, q, s = (JetPoint(_rand_fraction(rng), tuple(_rand_fraction(rng) for _ in range(r)))
                   for _ in range(3))
        t = Fraction(rng.randint(1, 9), rng.randint(1, 9))
        checks = {
            "associativity": jet_product(jet_product(p, q), s) == jet_product(p, jet_product(q, s)),
            "identity": jet_product(p, e) == p and jet_product(e, p) == p,
            "inverse": jet_product(p, jet_inverse(p)) == e and jet_product(jet_inverse(p), p) == e,
            "dilation": jet_dilate(t, jet_product(p, q)) == jet_product(jet_dilate(t, p), jet_dilate(t, q)),
        }
        bad += [{"sample": i, "axiom": k} for k, ok in checks.items() if not ok]
    _emit(args, {"r": r, "samples": n, "violations": len(bad), "witness": bad[0] if bad else None})
    return FAIL if bad else PASS


def cmd_jet_phi(args) -> int:
    r = _r(args)
    phi = build_phi(r, verify=False)
    rep = verify_phi(phi, r)
    _emit(args, {"r": r, "ok": rep.ok, "symmetric": rep.symmetric, "dominates": rep.dominates,
                 "zero_jets": rep.zero_jets, "constant_top_derivative": rep.constant_top_derivative,
                 "smooth": rep.smooth, "max_at_center": rep.max_at_center,
                 "sup_top_derivative": phi.sup_abs_derivative(r), "phi": phi.to_dict()})
    return PASS if rep.ok else FAIL


# ---------------------------------------------------------------------------
# graphs


def _schedule(args, M: int):
    if args.schedule == "embedding":
        return build_schedule(M, "embedding", _r(args))
    return build_schedule(M)


def cmd_graph_info(args) -> int:
    M = _positive("m-max", args.m_max if args.m_max is not None else args.m)
    S = _schedule(args, M)
    rows = [{"m": m, "N_m": S.N[m], "diameter": S.length(m), "edges": S.edge_count(m),
             "a": S.a(m), "A": S.A(m)} for m in range(1, M + 1)]
    _emit(args, {"schedule": list(S.N), "mode": S.mode, "levels": rows}, rows)
    return PASS


def cmd_graph_materialize(args) -> int:
    m = _positive("m", args.m)
    S = _schedule(args, m)
    if S.edge_count(m) > args.cap:
        raise UsageError(f"level {m} has {S.edge_count(m)} edges, above the cap {args.cap}")
    lines = list(export_edge_list(S, m, args.cap))
    text = f"# schedule={','.join(map(str, S.N))} version={__version__} level={m}\n" + "\n".join(lines) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return PASS


def cmd_graph_dp(args) -> int:
    m = _positive("m", args.m)
    p = as_fraction(args.p if args.p is not None else "2")
    S = _schedule(args, max(m, 1))
    if S.edge_count(m) > args.cap:
        raise UsageError(f"level {m} has {S.edge_count(m)} edges, above the cap {args.cap}")
    rep = exact_functional_graph(S, m, p, k_max=args.k_max, workers=args.threads)
    bound = truncation_bound(S, m)
    ok = lower(rep.lhs_truncated) >= lower(bound) and lower(rep.lhs_full) >= lower(Fraction(m * S.length(m), 16))
    row = rep.to_dict()
    row.update(truncation_bound=bound, bound_holds=ok)
    _emit(args, row, [rep.row()])
    return PASS if ok else FAIL


# ---------------------------------------------------------------------------
# embedding


def cmd_embed_separation(args) -> int:
    r, m = _r(args), _positive("m", args.m)
    fam = build_embedding(r, m)
    mode = "sampled" if args.samples else "exhaustive"
    rows = []
    ok = True
    for level in range(1, m + 1):
        sep = check_separation(fam, level, mode, samples=args.samples or 0, seed=args.seed)
        end = check_endpoints(fam, level) if mode == "exhaustive" and level <= 3 else None
        ok &= sep.passed and (end is None or end.ok)
        rows.append({"m": level, "pairs": sep.pairs, "rechecked": sep.rechecked, "min_ratio": sep.min_ratio,
                     "separation": sep.passed, "endpoints": None if end is None else end.ok})
    _emit(args, {"r": r, "schedule": list(fam.schedule.N), "mode": mode, "levels": rows}, rows)
    return PASS if ok else FAIL


def cmd_embed_moments(args) -> int:
    r, m = _r(args), _positive("m", args.m)
    n = _positive("samples", args.samples)
    fam = build_embedding(r, m)
    T = fam.schedule.length(m)
    t = args.t if args.t is not None else T // 3
    if not 0 <= t < T:
        raise UsageError(f"--t must lie in 0..{T - 1}")
    reps = moment_bound_check(fam, m, t, [-2, -1, 1, 2], n, args.seed)
    rows = [{"y": rp.y, "estimate": rp.estimate, "stderr": rp.stderr, "exact": rp.exact,
             "log_bound": rp.log_bound, "passed": rp.passed} for rp in reps]
    _emit(args, {"r": r, "m": m, "t": t, "samples": n, "schedule": list(fam.schedule.N), "rows": rows}, rows)
    return PASS if all(rp.passed for rp in reps) else FAIL


# ---------------------------------------------------------------------------
# scaling


def cmd_markov_scaling(args) -> int:
    r = _r(args)
    p = float(args.p) if args.p is not None else 2.0
    M = _positive("m-max", args.m_max)
    n = _positive("samples", args.samples)
    rep = scaling_report(r, p, range(1, M + 1), n, args.seed, workers=args.threads)
    if args.format == "csv":
        text = rep.to_csv()
    else:
        text = rep.to_json() + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return FAIL if rep.growth_expected and not rep.increasing else PASS


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algebra", help="built-in name (heisenberg, engel, filiform(4), ...) or JSON path")
    p.add_argument("--r", type=int)
    p.add_argument("--p")
    p.add_argument("--m", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--samples", type=int)
    p.add_argument("--certify-samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-max", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--schedule", choices=("minimal", "embedding"), default="minimal")
    p.add_argument("--cap", type=int, default=10 ** 6)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="json")


COMMANDS = {
    "algebra": {"validate": cmd_algebra_validate, "info": cmd_algebra_info},
    "group": {"product": cmd_group_product, "check": cmd_group_check},
    "norm": {"calibrate": cmd_norm_calibrate, "fourpoint": cmd_norm_fourpoint},
    "jet": {"check": cmd_jet_check, "phi": cmd_jet_phi},
    "graph": {"info": cmd_graph_info, "materialize": cmd_graph_materialize, "dp": cmd_graph_dp},
    "embed": {"separation": cmd_embed_separation, "moments": cmd_embed_moments},
    "markov": {"scaling": cmd_markov_scaling},
    "experiment": {"scaling": cmd_markov_scaling, "fourpoint": cmd_norm_fourpoint,
                   "graph-dp": cmd_graph_dp, "separation": cmd_embed_separation},
}

DEFAULT_SAMPLES = {cmd_markov_scaling: 200_000, cmd_norm_fourpoint: 100_000, cmd_group_check: 200,
                   cmd_jet_check: 200, cmd_embed_moments: 100_000, cmd_norm_calibrate: 100_000}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carnot-markov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    groups = parser.add_subparsers(dest="group", required=True)
    for group, cmds in COMMANDS.items():
        gp = groups.add_parser(group)
        sub = gp.add_subparsers(dest="command", required=True)
        for name, fn in cmds.items():
            sp = sub.add_parser(name, description=(fn.__doc__ or "").strip() or None)
            _common(sp)
            sp.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.samples is None and args.func in DEFAULT_SAMPLES:
        args.samples = DEFAULT_SAMPLES[args.func]
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except AlgebraError as exc:
        print(f"error: {exc}; witness {exc.witness}", file=sys.stderr)
        return FAIL
    except (ValueError, KeyError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
