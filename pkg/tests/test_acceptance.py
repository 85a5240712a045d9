"""Acceptance gate: one test per criterion, one PASS/FAIL line each.

The verdict lines are printed with capture disabled so a plain ``pytest -v``
run shows them.  Expensive SOS solves are shared through the session-scoped
``solved_levels`` fixture in conftest.py.
"""

import json
import time

import numpy as np
import pytest
from scipy.optimize import linprog

import rbsos
from rbsos.bilevel import robust_feasible
from rbsos.cli import EXIT_OK, main
from rbsos.farkas import (check_implication_sampled, find_certificate,
                          sample_feasible_points, verify_certificate)
from rbsos.lowerlevel import LowerLevelProblem, is_robust_solution
from rbsos.poly import Polynomial
from rbsos.sos import build_relaxation, certify_global, extract_sos_decomposition
from rbsos.uncertainty import (AffineUncertainConstraint, BoxSet, Spectrahedron,
                               ball_to_spectrahedron, box_extreme_points,
                               box_to_spectrahedron, slater_check)

from conftest import FIXTURES


_CAPSYS = None


@pytest.fixture(autouse=True)
def _verdict_channel(capsys):
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def _verdict(criterion: int, ok: bool, detail: str = ""):
    line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    with _CAPSYS.disabled():
        print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------- 1 and 2


def test_criterion_1_box_upper_example_k6(capsys):
    t0 = time.perf_counter()
    code = main(["solve", str(FIXTURES / "ep2.json"),
                 "--kmin", "6", "--kmax", "6", "--json"])
    wall = time.perf_counter() - t0
    report = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    (entry,) = [v for v in report["values"] if v["k"] == 6]
    ok = abs(entry["val"] - 1.0) <= 1e-3 and wall < 120.0
    _verdict(1, ok, f"val(D_6)={entry['val']:.6f} (target 1.000±1e-3), "
                    f"{wall:.1f}s < 120s")


def test_criterion_2_quartic_example_k4(solved_levels):
    _level, sol, wall = solved_levels[("ep3", 4)]
    ok = (sol.status == "optimal" and abs(sol.value - (-2.0)) <= 1e-3
          and wall < 60.0)
    _verdict(2, ok, f"val(D_4)={sol.value:.6f} (target -2.000±1e-3), "
                    f"{wall:.1f}s < 60s")


# ---------------------------------------------------------------------- 3


def test_criterion_3_nonclosed_cone_instance():
    A0 = np.eye(3)
    A1 = np.zeros((3, 3)); A1[0, 2] = A1[2, 0] = 1.0
    A2 = np.zeros((3, 3)); A2[1, 2] = A2[2, 1] = 1.0
    con = AffineUncertainConstraint(
        np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]), np.zeros(3),
        Spectrahedron((A0, A1, A2)))
    p = np.array([1.0, 0.0])
    cert = find_certificate(p, 0.0, [con])
    holds = check_implication_sampled(p, 0.0, [con], n_samples=1000, seed=23)
    ok = cert is None and holds
    _verdict(3, ok, f"certificate={'none' if cert is None else 'found'}, "
                    f"implication over 10^3 disk samples={'holds' if holds else 'fails'}")


# ---------------------------------------------------------------------- 4


def test_criterion_4_slater_violation_blocks_certificates(ep1):
    slater_ok, _ = slater_check(ep1.lower.constraints, x=np.array([0.0]),
                                c_rows=ep1.lower.c)
    certs = {k: certify_global(ep1, [0.0], [0.0], kappa=0.0, k=k)
             for k in (2, 4, 6)}
    ok = (not slater_ok) and all(c is None for c in certs.values())
    _verdict(4, ok, "slater_check=False, certificate=none for k=2,4,6")


# ---------------------------------------------------------------------- 5


def _grid_minimum(prob, check_rng):
    """Grid minimum of f over the robust-feasible set, step 0.01 on [-3,3]^2.

    The lower-level verdict is x-independent here (the lower constraints have
    no x-rows and the x-part of the lower objective is a constant shift), so
    the scan factorizes: one lower-level dual solve per y, then a cheap exact
    interval-arithmetic upper check per x.  The factorization is verified
    against robust_feasible on a random subsample.
    """
    assert np.all(prob.lower.c == 0.0)
    axis = np.round(np.arange(-3.0, 3.0 + 1e-9, 0.01), 2)
    best = np.inf
    feasible = []
    for y in axis:
        lower_ok, _ = is_robust_solution(prob.lower, [0.0], [y])
        if not lower_ok:
            continue
        for x in axis:
            if all(c.worst_violation([x], [y]) <= 1e-9 for c in prob.upper):
                val = prob.f(np.array([x, y]))
                feasible.append((x, y))
                if val < best:
                    best = val
    # spot-check the factorized verdict against the reference predicate
    members = {(float(x), float(y)) for x, y in feasible}
    for _ in range(50):
        x = float(check_rng.choice(axis))
        y = float(check_rng.choice(axis))
        ref, _mu = robust_feasible(prob, [x], [y])
        assert ref == ((x, y) in members), (x, y, ref)
    for i in check_rng.choice(len(feasible), size=min(20, len(feasible)),
                              replace=False):
        x, y = feasible[i]
        ref, _mu = robust_feasible(prob, [x], [y])
        assert ref
    return best


def test_criterion_5_lower_bound_property(ep2, ep3, solved_levels):
    rng = np.random.default_rng(17)
    details = []
    ok = True
    for name, prob in (("ep2", ep2), ("ep3", ep3)):
        gmin = _grid_minimum(prob, rng)
        for (pname, k), (_lev, sol, _w) in solved_levels.items():
            if pname != name or sol.status != "optimal":
                continue
            ok = ok and sol.value <= gmin + 1e-4
            details.append(f"{name} k={k}: {sol.value:.6f} <= {gmin:.4f}+1e-4")
    _verdict(5, ok, "; ".join(details))


# ---------------------------------------------------------------------- 6


def test_criterion_6_monotonicity(ep2, ep3, solved_levels):
    # k=2 is below deg f = 4 for both problems and is rejected at build
    # time, so those hierarchy entries are vacuous for monotonicity.
    from rbsos.bilevel import build_single_level
    for prob in (ep2, ep3):
        with pytest.raises(ValueError):
            build_relaxation(build_single_level(prob), prob.f, prob.kappa, 2)
    v4 = solved_levels[("ep2", 4)][1].value
    v6 = solved_levels[("ep2", 6)][1].value
    ok = v4 <= v6 + 1e-6
    _verdict(6, ok, f"ep2: val(D_4)={v4:.6f} <= val(D_6)={v6:.6f}+1e-6; "
                    "k=2 rejected (budget below deg f), ep3 single level vacuous")


# ---------------------------------------------------------------------- 7


def _extreme_point_oracle(prob, x, y, tol=1e-6):
    """Brute-force verdict via one LP over all box extreme-point rows."""
    rows, rhs = [], []
    shifts = prob.shifts(x)
    for j, con in enumerate(prob.constraints):
        bounds = np.stack([con.set.lo, con.set.hi], axis=1)
        for u in box_extreme_points(bounds):
            rows.append(con.a(u))
            rhs.append(con.b(u) - shifts[j])
    rows = np.array(rows)
    rhs = np.array(rhs)
    if np.any(rows @ y > rhs + tol):
        return False
    res = linprog(prob.d0, A_ub=rows, b_ub=rhs,
                  bounds=[(None, None)] * prob.n, method="highs")
    if res.status != 0:
        return False
    return float(prob.d0 @ y) <= res.fun + tol


def test_criterion_7_oracle_equivalence():
    rng = np.random.default_rng(7)
    disagreements = 0
    for _ in range(100):
        n = int(rng.integers(1, 3))
        q = int(rng.integers(1, 3))
        cons = []
        for _j in range(q):
            s = int(rng.integers(1, 3))
            cons.append(AffineUncertainConstraint(
                rng.normal(size=(s + 1, n)), rng.normal(size=s + 1),
                BoxSet(-rng.uniform(0.1, 1.0, size=s),
                       rng.uniform(0.1, 1.0, size=s))))
        prob = LowerLevelProblem(c0=rng.normal(size=1), d0=rng.normal(size=n),
                                 c=rng.normal(size=(q, 1)),
                                 constraints=tuple(cons))
        x = rng.normal(size=1)
        y = rng.normal(size=n)
        got, _cert = is_robust_solution(prob, x, y)
        if got != _extreme_point_oracle(prob, x, y):
            disagreements += 1
    _verdict(7, disagreements == 0,
             f"{disagreements} disagreements over 100 random instances")


# ---------------------------------------------------------------------- 8


def test_criterion_8_farkas_soundness():
    rng = np.random.default_rng(8)
    found = 0
    violations = 0
    attempts = 0
    while found < 100 and attempts < 300:
        attempts += 1
        n = int(rng.integers(1, 3))
        q = int(rng.integers(1, 3))
        cons = []
        p = np.zeros(n)
        r = 0.0
        # plant a strictly slack multiplier combination so a certificate,
        # hence the implication itself, exists by construction
        for _j in range(q):
            s = int(rng.integers(1, 3))
            gam = rng.uniform(0.2, 1.0, size=s)
            A = rng.normal(size=(s + 1, n))
            B = rng.normal(size=s + 1)
            cons.append(AffineUncertainConstraint(A, B, BoxSet(-gam, gam)))
            l0 = rng.uniform(0.2, 2.0)
            lam = rng.uniform(-0.9, 0.9, size=s) * l0 * gam
            p -= l0 * A[0] + lam @ A[1:]
            r -= l0 * B[0] + lam @ B[1:]
        r -= rng.uniform(0.0, 1.0)
        cert = find_certificate(p, r, cons)
        if cert is None:
            continue
        found += 1
        if not verify_certificate(cert, p, r, cons):
            violations += 1
            continue
        pts = sample_feasible_points(cons, 1000, seed=int(rng.integers(1 << 30)))
        violations += sum(1 for x in pts if p @ x < r - 1e-6)
    ok = found == 100 and violations == 0
    _verdict(8, ok, f"{found}/100 certificates verified, "
                    f"{violations} sampled-point violations (10^3 samples each)")


# ---------------------------------------------------------------------- 9


def test_criterion_9_encoding_equivalence():
    rng = np.random.default_rng(9)
    gamma = np.array([0.5, 1.5, 1.0])
    box_spec = box_to_spectrahedron(gamma)
    box_bad = sum(
        1 for _ in range(1000)
        if box_spec.contains(u := rng.uniform(-2 * gamma, 2 * gamma), tol=1e-9)
        != bool(np.all(np.abs(u) <= gamma + 1e-9)))
    ball_spec = ball_to_spectrahedron(3)
    ball_bad = 0
    for _ in range(1000):
        u = rng.normal(size=3)
        if rng.random() < 0.3:
            u /= np.linalg.norm(u)
        if ball_spec.contains(u, tol=1e-9) != bool(np.linalg.norm(u) <= 1 + 1e-9):
            ball_bad += 1
    ok = box_bad == 0 and ball_bad == 0
    _verdict(9, ok, f"box disagreements {box_bad}/1000, "
                    f"ball disagreements {ball_bad}/1000")


# --------------------------------------------------------------------- 10


def test_criterion_10_identity_residual_and_extraction(ep2, ep3, solved_levels):
    probs = {"ep2": ep2, "ep3": ep3}
    worst_res = 0.0
    worst_rec = 0.0
    ok = True
    for (name, _k), (level, sol, _w) in solved_levels.items():
        if sol.status != "optimal":
            continue
        fnorm = probs[name].f.coeff_norm()
        ok = ok and sol.residual <= 1e-6 * (1 + fnorm)
        worst_res = max(worst_res, sol.residual / (1 + fnorm))
        grams = [(sol.sigma0_gram, level.sigma0_basis, sol.sigma0)]
        for G, basis, poly in zip(sol.sigma_grams, level.sigma_bases,
                                  sol.sigmas):
            if G is not None and basis:
                grams.append((G, basis, poly))
        if sol.zeta_gram is not None and level.zeta_basis:
            grams.append((sol.zeta_gram, level.zeta_basis, sol.zeta))
        for G, basis, poly in grams:
            squares = extract_sos_decomposition(G, list(basis), level.nvars,
                                                tol=1e-6)
            recon = Polynomial.zero(level.nvars)
            for s in squares:
                recon = recon + s * s
            err = (recon - poly).coeff_norm()
            worst_rec = max(worst_rec, err)
            ok = ok and err <= 1e-6
    _verdict(10, ok, f"max scaled residual {worst_res:.2e} <= 1e-6, "
                     f"max extraction error {worst_rec:.2e} <= 1e-6")
