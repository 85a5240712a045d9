"""Command-line entry point.

Subcommands mirror the library layers:

    rbsos check-farkas FILE --p 1,0 --r 0     robust Farkas certificate search
    rbsos check-lower  FILE --x .. --y ..     lower-level robust optimality
    rbsos check-feasible FILE --x .. --y ..   robust feasibility of (x, y)
    rbsos solve        FILE [--kmin/--kmax]   SOS hierarchy lower bounds
    rbsos certify      FILE --x .. --y .. --k global-optimality certificate

Reports print human-readable by default; --json emits the machine-readable
report {command, status, values, certificates, warnings, timings}.  Exit
codes: 0 ok, 2 parse error, 3 solver indeterminate, 4 hypothesis gate
(coercivity / lower-level Slater) tripped without --force.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings as _warnings

import numpy as np

from .bilevel import (BilevelProblem, _uncertainty_from_dict, ball_robust_feasible,
                      load_problem, robust_feasible)
from .farkas import check_implication_sampled, find_certificate, verify_certificate
from .lowerlevel import is_robust_solution
from .poly import Polynomial
from .sos import certify_global, hierarchy_warnings, run_hierarchy
from .uncertainty import (AffineUncertainConstraint, IndeterminateError,
                          closedness_sufficient)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INDETERMINATE = 3
EXIT_HYPOTHESIS = 4


class ParseError(Exception):
    pass


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ParseError(f"expected comma-separated floats, got {text!r}: {exc}")


def _load_bilevel(path: str) -> BilevelProblem:
    try:
        return load_problem(path)
    except FileNotFoundError as exc:
        raise ParseError(str(exc))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad problem file: {exc}")


def _load_farkas(path: str):
    """Farkas problem file: {"p": [...], "r": float, "constraints": [
    {"a_coeffs": [[..]..], "b_coeffs": [..], "uncertainty": {..}}, ...]}."""
    try:
        with open(path) as fh:
            data = json.load(fh)
        p = np.asarray(data["p"], dtype=float)
        r = float(data["r"])
        cons = tuple(
            AffineUncertainConstraint(np.asarray(c["a_coeffs"], dtype=float),
                                      np.asarray(c["b_coeffs"], dtype=float),
                                      _uncertainty_from_dict(c["uncertainty"]))
            for c in data["constraints"])
        return p, r, cons
    except FileNotFoundError as exc:
        raise ParseError(str(exc))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad farkas file: {exc}")


def _report(command: str, path: str) -> dict:
    return {"command": command, "input": _digest(path), "status": "ok",
            "values": [], "certificates": {}, "warnings": [], "timings": {}}


def _emit(report: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        print(json.dumps(report, indent=2))
    else:
        for line in lines:
            print(line)


def _poly_records(p: Polynomial) -> list[dict]:
    return p.to_records()


# ---------------------------------------------------------------------------
# subcommands

def cmd_check_farkas(args) -> int:
    p, r, cons = _load_farkas(args.file)
    if args.p is not None:
        p = np.asarray(_floats(args.p), dtype=float)
    if args.r is not None:
        r = float(args.r)
    report = _report("check-farkas", args.file)
    lines = []
    t0 = time.perf_counter()
    closed = closedness_sufficient(cons)
    report["certificates"]["closedness"] = closed
    try:
        cert = find_certificate(p, r, cons)
    except IndeterminateError as exc:
        report["status"] = "indeterminate"
        report["warnings"].append(str(exc))
        _emit(report, args.json, [f"certificate search indeterminate: {exc}"])
        return EXIT_INDETERMINATE
    if cert is not None:
        ok = verify_certificate(cert, p, r, cons, tol=args.tol)
        report["certificates"]["farkas"] = {
            "lam0": cert.lam0.tolist(), "lam": cert.lam.tolist(),
            "verified": bool(ok)}
        lines.append(f"implication: holds (certificate); closedness: {closed}")
        lines.append(f"certificate: lam0={cert.lam0.tolist()} lam={cert.lam.tolist()}")
        lines.append(f"verification: {'pass' if ok else 'FAIL'}")
        if not ok:
            report["status"] = "indeterminate"
    else:
        holds = check_implication_sampled(p, r, cons, n_samples=args.samples,
                                          tol=args.tol)
        report["certificates"]["farkas"] = None
        report["certificates"]["implication_sampled"] = bool(holds)
        if closed == "unknown":
            report["warnings"].append(
                "closedness unverified: certificate absence is not a refutation")
        lines.append(f"implication: {'holds (sampled)' if holds else 'fails (sampled)'}; "
                     f"certificate: none; closedness: {closed}")
    report["timings"]["total"] = time.perf_counter() - t0
    _emit(report, args.json, lines)
    return EXIT_OK


def _split_point(prob: BilevelProblem, args):
    x = np.asarray(_floats(args.x), dtype=float)
    y = np.asarray(_floats(args.y), dtype=float)
    if x.shape[0] != prob.m or y.shape[0] != prob.n:
        raise ParseError(f"point dims ({x.shape[0]}, {y.shape[0]}) "
                         f"!= problem dims ({prob.m}, {prob.n})")
    return x, y


def cmd_check_feasible(args) -> int:
    prob = _load_bilevel(args.file)
    report = _report("check-feasible", args.file)
    x, y = _split_point(prob, args)
    t0 = time.perf_counter()
    try:
        if prob.is_box:
            ok, mu = robust_feasible(prob, x, y, tol=args.tol)
            if mu is not None:
                report["certificates"]["mu"] = mu.tolist()
        else:
            ok, mult = ball_robust_feasible(prob, x, y, tol=args.tol)
            if mult is not None:
                report["certificates"]["multipliers"] = {
                    k: v.tolist() for k, v in mult.items()}
    except IndeterminateError as exc:
        report["status"] = "indeterminate"
        _emit(report, args.json, [f"indeterminate: {exc}"])
        return EXIT_INDETERMINATE
    report["certificates"]["robust_feasible"] = bool(ok)
    report["timings"]["total"] = time.perf_counter() - t0
    _emit(report, args.json, [f"robust feasible: {ok}"])
    return EXIT_OK


def cmd_check_lower(args) -> int:
    prob = _load_bilevel(args.file)
    report = _report("check-lower", args.file)
    x, y = _split_point(prob, args)
    t0 = time.perf_counter()
    try:
        with _warnings.catch_warnings(record=True) as caught:
            _warnings.simplefilter("always")
            ok, cert = is_robust_solution(prob.lower, x, y, tol=args.tol)
        for w in caught:
            report["warnings"].append(str(w.message))
    except IndeterminateError as exc:
        report["status"] = "indeterminate"
        _emit(report, args.json, [f"indeterminate: {exc}"])
        return EXIT_INDETERMINATE
    report["certificates"]["robust_solution"] = bool(ok)
    lines = [f"lower-level robust solution: {ok}"]
    if cert is not None:
        report["certificates"]["lower"] = {
            "lam0": cert.lam0.tolist(), "lam": cert.lam.tolist(),
            "closedness": cert.closedness}
        lines.append(f"closedness: {cert.closedness}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    report["timings"]["total"] = time.perf_counter() - t0
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_solve(args) -> int:
    prob = _load_bilevel(args.file)
    report = _report("solve", args.file)
    gate = hierarchy_warnings(prob, prob.feasible_point)
    report["warnings"].extend(gate)
    if gate and not args.force:
        report["status"] = "hypothesis-gate"
        _emit(report, args.json,
              [f"hypothesis gate: {w}" for w in gate]
              + ["(re-run with --force to solve anyway)"])
        return EXIT_HYPOTHESIS
    try:
        hier = run_hierarchy(prob, k_min=args.kmin, k_max=args.kmax,
                             kappa=args.kappa, tol=args.tol,
                             dump_dir=args.dump_sdp)
    except ValueError as exc:
        raise ParseError(str(exc))
    report["values"] = [{"k": k, "val": None if v != v else v, "status": st}
                        for k, v, st in hier.values()]
    report["timings"] = hier.timings
    report["certificates"]["best_bound"] = hier.best_bound
    report["certificates"]["certified"] = hier.certified
    lines = [f"kappa = {hier.kappa}; feasible point = {hier.feasible_point}"]
    for k, v, st in hier.values():
        val = f"{v:+.6f}" if v == v else "-"
        lines.append(f"  k={k:2d}  val={val}  [{st}]")
    if hier.best_bound is not None:
        mark = "  CERTIFIED" if hier.certified else ""
        lines.append(f"best lower bound: {hier.best_bound:+.6f}{mark}")
    if not hier.monotone:
        report["warnings"].append("non-monotone level values (numerics)")
        lines.append("warning: non-monotone level values")
    for w in gate:
        lines.append(f"warning: {w}")
    _emit(report, args.json, lines)
    if hier.best_bound is None:
        report["status"] = "indeterminate"
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_certify(args) -> int:
    prob = _load_bilevel(args.file)
    report = _report("certify", args.file)
    x, y = _split_point(prob, args)
    fval = float(prob.f(np.concatenate([x, y])))
    kappa = args.kappa
    if kappa is None:
        kappa = prob.kappa if prob.kappa is not None else fval
    t0 = time.perf_counter()
    try:
        cert = certify_global(prob, x, y, kappa, args.k, tol=args.tol)
    except IndeterminateError as exc:
        report["status"] = "indeterminate"
        _emit(report, args.json, [f"indeterminate: {exc}"])
        return EXIT_INDETERMINATE
    except ValueError as exc:
        raise ParseError(str(exc))
    report["timings"]["total"] = time.perf_counter() - t0
    if cert is None:
        report["certificates"]["global"] = None
        _emit(report, args.json, [
            f"certificate: none at k={args.k} (inconclusive: the epsilon-free "
            "representation may require a larger degree, or the point may not "
            "be globally optimal)"])
        return EXIT_OK
    report["certificates"]["global"] = {
        "k": cert.k, "value": cert.value, "kappa": cert.kappa,
        "residual": cert.residual,
        "sigma0": _poly_records(cert.sigma0),
        "sigmas": [_poly_records(p) for p in cert.sigmas],
        "zeta": _poly_records(cert.zeta),
        "xis": [_poly_records(p) for p in cert.xis]}
    _emit(report, args.json, [
        f"certificate: found at k={cert.k}; value {cert.value:+.6f} "
        f"(identity residual {cert.residual:.2e})"])
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rbsos",
        description="Robust bilevel polynomial optimization via SOS relaxations")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file", help="problem file (JSON)")
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("check-farkas", help="robust Farkas certificate search")
    common(p)
    p.add_argument("--p", dest="p", default=None,
                   help="override objective vector (comma-separated)")
    p.add_argument("--r", type=float, default=None, help="override bound r")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_check_farkas)

    p = sub.add_parser("check-feasible", help="robust feasibility of (x, y)")
    common(p)
    p.add_argument("--x", required=True, help="comma-separated upper variables")
    p.add_argument("--y", required=True, help="comma-separated lower variables")
    p.set_defaults(func=cmd_check_feasible)

    p = sub.add_parser("check-lower", help="lower-level robust optimality")
    common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.set_defaults(func=cmd_check_lower)

    p = sub.add_parser("solve", help="run the SOS hierarchy")
    common(p)
    p.add_argument("--kmin", type=int, default=None, help="even degree bound")
    p.add_argument("--kmax", type=int, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--force", action="store_true",
                   help="solve even when hypothesis checks fail")
    p.add_argument("--dump-sdp", default=None, metavar="DIR",
                   help="dump per-level conic programs and certificates")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="search a global-optimality certificate")
    common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--kappa", type=float, default=None)
    p.set_defaults(func=cmd_certify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except IndeterminateError as exc:
        print(f"solver indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE


if __name__ == "__main__":
    sys.exit(main())
