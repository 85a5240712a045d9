"""SOS relaxations of the single-level reformulation.

A relaxation level with even degree budget k encodes the identity

    f - sum_i sigma_i g_i - sum_j xi_j h_j - zeta (kappa - f) - t = sigma_0

as a conic program: sigma_0, the sigma_i and zeta carry PSD Gram blocks over
monomial bases chosen so every product respects the degree budget, the xi_j
are free coefficient vectors, and t is the free lower-bound variable being
maximized.  Coefficient matching is exact row generation over the full
monomial basis of degree <= k (no sampling), with each row normalized to
unit max coefficient.

The hierarchy over even k produces nondecreasing lower bounds on the global
robust optimal value; when the level value reaches f at a robust-feasible
candidate point, the epsilon-free identity at t = f(x, y) is a sufficient
certificate of global optimality.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bilevel import BilevelProblem, SingleLevelProgram, build_single_level, robust_feasible
from .conic import ConeSlice, ConicProgram, ConicSolution, svec_len
from .poly import Monomial, Polynomial, gram_expand, monomial_basis
from .uncertainty import IndeterminateError, slater_check

IDENTITY_TOL = 1e-6
MONOTONE_SLACK = 1e-6


def _even_up(k: int) -> int:
    return k if k % 2 == 0 else k + 1


def _pair_contributions(basis: list[Monomial], sl: ConeSlice, g: Polynomial,
                        rows: dict[Monomial, list[tuple[int, float]]]) -> None:
    """Accumulate the coefficient contributions of a Gram block (in svec
    coordinates) times the polynomial g into the per-monomial rows.

    The Gram form contributes G[a,a] on the diagonal and 2 G[a,b] off it;
    the svec variable stores sqrt(2) G[a,b] off-diagonal, so the column
    weight is 1 on the diagonal and sqrt(2) off it.
    """
    d = len(basis)
    idx = 0
    for a in range(d):
        for b in range(a, d):
            w = 1.0 if a == b else math.sqrt(2.0)
            prod = basis[a] * basis[b]
            col = sl.start + idx
            for mono, c in g.terms.items():
                rows.setdefault(prod * mono, []).append((col, w * c))
            idx += 1


@dataclass
class RelaxationLevel:
    """Compiled conic program of one SOS level plus the bookkeeping needed to
    reconstruct the multiplier polynomials from a solution."""

    k: int
    conic: ConicProgram
    nvars: int
    f: Polynomial                 # embedded in the full (x, y, mu) space
    kappa: float
    t_slice: ConeSlice
    sigma0_slice: ConeSlice
    sigma0_basis: list[Monomial]
    sigma_slices: tuple[ConeSlice, ...]
    sigma_bases: tuple[tuple[Monomial, ...], ...]
    zeta_slice: ConeSlice
    zeta_basis: list[Monomial]
    xi_slices: tuple[ConeSlice, ...]
    xi_bases: tuple[tuple[Monomial, ...], ...]
    g: tuple[Polynomial, ...]
    h: tuple[Polynomial, ...]


@dataclass
class LevelSolution:
    """Solved level: the bound t = val(D_k) and the multiplier polynomials,
    with the identity residual measured in coefficient max-norm."""

    k: int
    status: str                   # optimal | infeasible | unbounded | ...
    value: float = math.nan
    t: float = math.nan
    sigma0: Polynomial | None = None
    sigma0_gram: np.ndarray | None = None
    sigmas: tuple[Polynomial, ...] = ()
    sigma_grams: tuple[np.ndarray, ...] = ()
    zeta: Polynomial | None = None
    zeta_gram: np.ndarray | None = None
    xis: tuple[Polynomial, ...] = ()
    residual: float = math.nan
    wall_time: float = math.nan


def build_relaxation(slp: SingleLevelProgram, f: Polynomial, kappa: float,
                     k: int) -> RelaxationLevel:
    """Compile level k of the hierarchy for the constraint family slp.

    k is rounded up to even.  The degree budget must cover f and every g/h;
    otherwise the level is rejected rather than silently truncated.
    """
    N = slp.layout.nvars
    if f.nvars != N:
        f = f.embed(N)
    k = _even_up(int(k))
    deg_f = f.degree()
    if k < deg_f:
        raise ValueError(f"degree budget k={k} below deg f = {deg_f}; "
                         "the level would silently truncate the objective")

    prog = ConicProgram()
    rows: dict[Monomial, list[tuple[int, float]]] = {}

    t_slice = prog.add_slice("free", 1)
    prog.set_objective(t_slice.start, -1.0)   # minimize -t  <=>  maximize t
    rows.setdefault(Monomial(), []).append((t_slice.start, 1.0))

    sigma0_basis = monomial_basis(N, k // 2)
    sigma0_slice = prog.add_slice("psd", dim=len(sigma0_basis))
    _pair_contributions(sigma0_basis, sigma0_slice, Polynomial.constant(1.0, N), rows)

    # multipliers whose product would exceed the budget are pinned to zero
    sigma_slices, sigma_bases = [], []
    for g in slp.g:
        if g.degree() > k:
            sigma_slices.append(None)
            sigma_bases.append(())
            continue
        basis = monomial_basis(N, (k - g.degree()) // 2)
        sl = prog.add_slice("psd", dim=len(basis))
        _pair_contributions(basis, sl, g, rows)
        sigma_slices.append(sl)
        sigma_bases.append(tuple(basis))

    # zeta multiplies (kappa - f)
    zeta_basis = monomial_basis(N, (k - deg_f) // 2)
    kmf = Polynomial.constant(float(kappa), N) - f
    zeta_slice = prog.add_slice("psd", dim=len(zeta_basis))
    _pair_contributions(zeta_basis, zeta_slice, kmf, rows)

    xi_slices, xi_bases = [], []
    for h in slp.h:
        if h.degree() > k:
            xi_slices.append(None)
            xi_bases.append(())
            continue
        basis = monomial_basis(N, k - h.degree())
        sl = prog.add_slice("free", len(basis))
        for pos, mono in enumerate(basis):
            for hm, c in h.terms.items():
                rows.setdefault(mono * hm, []).append((sl.start + pos, float(c)))
        xi_slices.append(sl)
        xi_bases.append(tuple(basis))

    # one equality per monomial of degree <= k, normalized to unit max coeff
    for mono in monomial_basis(N, k):
        entries = rows.get(mono, [])
        rhs = f.coeff(mono)
        if not entries:
            if abs(rhs) > 0:
                raise ValueError(f"monomial {mono} unreachable by any multiplier")
            continue
        merged: dict[int, float] = {}
        for col, c in entries:
            merged[col] = merged.get(col, 0.0) + c
        scale = max(max(abs(c) for c in merged.values()), abs(rhs))
        if scale == 0.0:
            continue
        prog.add_equality([(col, c / scale) for col, c in merged.items()], rhs / scale)

    return RelaxationLevel(
        k=k, conic=prog, nvars=N, f=f, kappa=float(kappa),
        t_slice=t_slice, sigma0_slice=sigma0_slice, sigma0_basis=sigma0_basis,
        sigma_slices=tuple(sigma_slices), sigma_bases=tuple(sigma_bases),
        zeta_slice=zeta_slice, zeta_basis=zeta_basis,
        xi_slices=tuple(xi_slices), xi_bases=tuple(xi_bases),
        g=tuple(slp.g), h=tuple(slp.h))


def identity_residual(level: RelaxationLevel, sol: LevelSolution,
                      t: float | None = None) -> float:
    """Coefficient max-norm of f - sum sigma_i g_i - sum xi_j h_j
    - zeta (kappa - f) - t - sigma_0 for the multipliers in sol."""
    N = level.nvars
    r = level.f - Polynomial.constant(sol.t if t is None else float(t), N)
    r = r - sol.sigma0
    for sig, g in zip(sol.sigmas, level.g):
        r = r - sig * g
    for xi, h in zip(sol.xis, level.h):
        r = r - xi * h
    kmf = Polynomial.constant(level.kappa, N) - level.f
    r = r - sol.zeta * kmf
    return r.coeff_norm()


def solve_relaxation(level: RelaxationLevel) -> LevelSolution:
    """Solve one level and reconstruct the multiplier polynomials."""
    start = time.perf_counter()
    conic_sol: ConicSolution = level.conic.solve()
    elapsed = time.perf_counter() - start
    if conic_sol.status != "optimal":
        return LevelSolution(k=level.k, status=conic_sol.status, wall_time=elapsed)

    t = float(conic_sol.primal[level.t_slice.start])
    G0 = conic_sol.slice_matrix(level.sigma0_slice)
    sigmas, grams = [], []
    for sl, basis in zip(level.sigma_slices, level.sigma_bases):
        if sl is None:
            grams.append(np.zeros((0, 0)))
            sigmas.append(Polynomial.zero(level.nvars))
            continue
        G = conic_sol.slice_matrix(sl)
        grams.append(G)
        sigmas.append(gram_expand(list(basis), G, level.nvars))
    Gz = conic_sol.slice_matrix(level.zeta_slice)
    xis = []
    for sl, basis in zip(level.xi_slices, level.xi_bases):
        if sl is None:
            xis.append(Polynomial.zero(level.nvars))
            continue
        coeffs = conic_sol.slice_value(sl)
        xis.append(Polynomial({mono: c for mono, c in zip(basis, coeffs)}, level.nvars))

    sol = LevelSolution(
        k=level.k, status="optimal", value=t, t=t,
        sigma0=gram_expand(level.sigma0_basis, G0, level.nvars), sigma0_gram=G0,
        sigmas=tuple(sigmas), sigma_grams=tuple(grams),
        zeta=gram_expand(level.zeta_basis, Gz, level.nvars), zeta_gram=Gz,
        xis=tuple(xis), wall_time=elapsed)
    sol.residual = identity_residual(level, sol)
    return sol


def extract_sos_decomposition(G: np.ndarray, basis: list[Monomial],
                              nvars: int | None = None,
                              tol: float = 1e-8) -> list[Polynomial]:
    """Eigen-factorize a (numerically) PSD Gram matrix into polynomials f_j
    with v^T G v ~ sum f_j^2; reconstruction error is bounded by
    10 * tol * ||G||."""
    G = np.asarray(G, dtype=float)
    G = 0.5 * (G + G.T)
    if nvars is None:
        nvars = max((m.max_index() for m in basis), default=-1) + 1
    w, V = np.linalg.eigh(G)
    norm = float(np.linalg.norm(G, 2)) if G.size else 0.0
    if w.size and w.min() < -tol * max(norm, 1.0):
        raise ValueError(f"Gram matrix indefinite: lambda_min={w.min():.3e}")
    out = []
    for j in range(len(w)):
        if w[j] <= tol:
            continue
        vec = math.sqrt(w[j]) * V[:, j]
        out.append(Polynomial({m: float(c) for m, c in zip(basis, vec)}, nvars))
    target = gram_expand(list(basis), G, nvars)
    recon = Polynomial.zero(nvars)
    for p in out:
        recon = recon + p * p
    err = (target - recon).coeff_norm()
    if err > 10.0 * max(tol, 1e-12) * max(norm, 1.0):
        raise ArithmeticError(f"SOS reconstruction residual {err:.3e} too large")
    return out


@dataclass(frozen=True)
class GlobalCertificate:
    """An epsilon-free identity f - sum sigma_i g_i - sum xi_j h_j
    - zeta (kappa - f) - f(x, y) = sigma_0, proving global robust optimality
    of the candidate point."""

    point: tuple[float, ...]
    value: float
    k: int
    kappa: float
    sigma0: Polynomial
    sigmas: tuple[Polynomial, ...]
    zeta: Polynomial
    xis: tuple[Polynomial, ...]
    residual: float


def certify_global(prob: BilevelProblem, x, y, kappa: float, k: int,
                   tol: float = IDENTITY_TOL,
                   prune: str = "null") -> GlobalCertificate | None:
    """Search a degree-k certificate that (x, y) is a global robust solution.

    Succeeds when val(D_k) reaches f(x, y) (within tol): the optimal
    multipliers then satisfy the identity at t = f(x, y) after absorbing the
    surplus into sigma_0's constant Gram entry.  Returning None is
    inconclusive unless impossibility is known by other means; the level
    value can sit strictly below val(P), in which case a larger k may
    still certify.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ok, _ = robust_feasible(prob, x, y)
    if not ok:
        raise ValueError("candidate point is not robust feasible")
    fval = float(prob.f(np.concatenate([x, y])))
    if kappa < fval - tol:
        raise ValueError(f"kappa={kappa} below candidate value {fval}")

    slp = build_single_level(prob, prune=prune)
    level = build_relaxation(slp, prob.f, kappa, k)
    sol = solve_relaxation(level)
    if sol.status != "optimal" or sol.value < fval - tol:
        return None

    # shift t to exactly f(x, y), absorbing the surplus into sigma_0
    delta = sol.t - fval
    G0 = sol.sigma0_gram.copy()
    G0[0, 0] += delta          # basis[0] is the constant monomial (grlex)
    wmin = float(np.linalg.eigvalsh(G0).min())
    if wmin < -tol:
        return None
    sigma0 = gram_expand(level.sigma0_basis, G0, level.nvars)
    shifted = LevelSolution(
        k=sol.k, status="optimal", value=fval, t=fval, sigma0=sigma0,
        sigma0_gram=G0, sigmas=sol.sigmas, sigma_grams=sol.sigma_grams,
        zeta=sol.zeta, zeta_gram=sol.zeta_gram, xis=sol.xis)
    residual = identity_residual(level, shifted)
    if residual > tol * (1.0 + level.f.coeff_norm()):
        return None
    return GlobalCertificate(
        point=tuple(float(v) for v in np.concatenate([x, y])), value=fval,
        k=level.k, kappa=float(kappa), sigma0=sigma0, sigmas=sol.sigmas,
        zeta=sol.zeta, xis=sol.xis, residual=residual)


@dataclass
class HierarchyReport:
    """Per-level values of the hierarchy plus the hypothesis warnings that a
    caller may turn into hard gates."""

    kappa: float
    feasible_point: tuple[float, ...]
    levels: list[LevelSolution] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    monotone: bool = True
    best_bound: float | None = None
    certified: bool = False
    certificate: GlobalCertificate | None = None
    timings: dict = field(default_factory=dict)

    def values(self) -> list[tuple[int, float, str]]:
        return [(s.k, s.value, s.status) for s in self.levels]


def hierarchy_warnings(prob: BilevelProblem, feasible_point=None) -> list[str]:
    """The hypothesis checks behind the hierarchy's convergence guarantee:
    coercivity of f (a user assertion) and the lower-level Slater condition."""
    warnings = []
    if not prob.assert_coercive:
        warnings.append("coercivity not asserted: hierarchy convergence unguaranteed")
    x = None
    if feasible_point is not None:
        x = np.asarray(feasible_point, dtype=float)[:prob.m]
    try:
        ok, _ = slater_check(prob.lower.constraints, x=x, c_rows=prob.lower.c)
    except IndeterminateError:
        ok = False
    if not ok:
        warnings.append("LSC violated: lower-level Slater condition fails")
    return warnings


def run_hierarchy(prob: BilevelProblem, feasible_point=None,
                  k_min: int | None = None, k_max: int | None = None,
                  kappa: float | None = None, tol: float = IDENTITY_TOL,
                  prune: str = "null", dump_dir: str | None = None) -> HierarchyReport:
    """Solve every even level k in [k_min, k_max] and report the bounds.

    Defaults: feasible_point and kappa come from the problem file (kappa
    falls back to f at the feasible point, always a valid upper bound);
    k_min is the family's max degree rounded up to even, k_max = k_min + 4.
    Per-level solver failures are recorded, not fatal.
    """
    fp = feasible_point if feasible_point is not None else prob.feasible_point
    if fp is None:
        raise ValueError("run_hierarchy needs a robust feasible point")
    fp = np.asarray(fp, dtype=float)
    x, y = fp[:prob.m], fp[prob.m:]
    ok, _ = robust_feasible(prob, x, y)
    if not ok:
        raise ValueError(f"point {tuple(fp)} is not robust feasible")
    fval = float(prob.f(fp))
    if kappa is None:
        kappa = prob.kappa if prob.kappa is not None else fval
    if kappa < fval - tol:
        raise ValueError(f"kappa={kappa} below f(feasible point)={fval}")

    slp = build_single_level(prob, prune=prune)
    max_deg = max([prob.f.degree()]
                  + [g.degree() for g in slp.g] + [h.degree() for h in slp.h])
    if k_min is None:
        k_min = _even_up(max_deg)
    k_min = _even_up(int(k_min))
    if k_max is None:
        k_max = k_min + 4
    k_max = _even_up(int(k_max))

    report = HierarchyReport(kappa=float(kappa),
                             feasible_point=tuple(float(v) for v in fp),
                             warnings=hierarchy_warnings(prob, fp))
    total = time.perf_counter()
    for k in range(k_min, k_max + 1, 2):
        try:
            level = build_relaxation(slp, prob.f, kappa, k)
            sol = solve_relaxation(level)
        except Exception as exc:  # per-level failures are recorded, not fatal
            sol = LevelSolution(k=k, status=f"error: {exc}")
            level = None
        report.levels.append(sol)
        report.timings[f"k={k}"] = sol.wall_time
        if dump_dir is not None and level is not None:
            _dump_level(dump_dir, level, sol)

    vals = [s.value for s in report.levels if s.status == "optimal"]
    report.best_bound = max(vals) if vals else None
    report.monotone = all(b >= a - MONOTONE_SLACK for a, b in zip(vals, vals[1:]))

    # try to certify the candidate at the largest solved level
    # heuristic trigger only -- certify_global itself re-verifies rigorously
    solved = [s.k for s in report.levels if s.status == "optimal"]
    if solved and report.best_bound is not None and report.best_bound >= fval - 1e-3:
        try:
            cert = certify_global(prob, x, y, kappa, max(solved), tol=tol, prune=prune)
        except (ValueError, IndeterminateError):
            cert = None
        if cert is not None:
            report.certified = True
            report.certificate = cert
    report.timings["total"] = time.perf_counter() - total
    return report


def _dump_level(dump_dir: str, level: RelaxationLevel, sol: LevelSolution) -> None:
    """Per-level artifacts: the conic dump plus the multiplier polynomials in
    the problem-file literal syntax (exponents/coeff records)."""
    import json
    import os

    os.makedirs(dump_dir, exist_ok=True)
    level.conic.dump(os.path.join(dump_dir, f"level_{level.k}.sdp"))
    if sol.status != "optimal":
        return
    cert = {
        "k": level.k,
        "t": sol.t,
        "sigma0": sol.sigma0.to_records(),
        "sigmas": [p.to_records() for p in sol.sigmas],
        "zeta": sol.zeta.to_records(),
        "xis": [p.to_records() for p in sol.xis],
        "residual": sol.residual,
    }
    with open(os.path.join(dump_dir, f"level_{level.k}.cert.json"), "w") as fh:
        json.dump(cert, fh, indent=2)
        fh.write("\n")
