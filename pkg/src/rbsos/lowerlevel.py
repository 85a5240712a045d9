"""Robust feasibility and robust optimality for the uncertain lower-level LP.

The lower level is  min_z { c0'x + d0'z : c_j'x + a_j(u_j)'z <= b_j(u_j) }
with each u_j ranging over its uncertainty set, and x fixed by the upper
level.  A point y is a *robust solution* (y in Y(x)) when it is feasible for
every realization and optimal for the robust counterpart.  Under closedness
of the constraint-data cone, optimality is equivalent to feasibility of a
dual multiplier system: multipliers lam0_j >= 0, lam_j in R^s with

    d0 + sum_j (lam0_j a_j^0 + sum_i lam_j^i a_j^i) = 0,
    -d0'y - sum_j (lam0_j (b_j^0 - c_j'x) + sum_i lam_j^i b_j^i) >= 0,
    lam0_j A_j^0 + sum_i lam_j^i A_j^i >= 0 (PSD, per set pencil).

The pencil condition collapses to linear rows |lam_j^i| <= gamma_i lam0_j
for box sets and to the second-order-cone row (lam0_j)^2 >= sum_i (lam_j^i)^2
for unit balls, so those two families get exact specialized solvers; general
spectrahedra go through the SDP route in the farkas module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, psd_check, svec
from .farkas import (MULTIPLIER_BOUND, FarkasCertificate, find_certificate,
                     verify_certificate)
from .uncertainty import (AffineUncertainConstraint, BallSet, BoxSet,
                          IndeterminateError, box_extreme_points,
                          closedness_sufficient, max_affine_over_set,
                          _add_robust_leq)

FEAS_TOL = 1e-8


class InfeasibleProblemError(Exception):
    """The robust lower-level feasible set is empty."""


class UnboundedProblemError(Exception):
    """The robust lower-level objective is unbounded below."""


@dataclass(frozen=True)
class LowerLevelProblem:
    """min_z c0'x + d0'z  s.t.  c_j'x + a_j(u_j)'z <= b_j(u_j) for all u_j."""

    c0: np.ndarray                                   # (m,)
    d0: np.ndarray                                   # (n,)
    c: np.ndarray                                    # (q, m)
    constraints: tuple[AffineUncertainConstraint, ...]

    def __post_init__(self):
        c0 = np.atleast_1d(np.asarray(self.c0, dtype=float))
        d0 = np.atleast_1d(np.asarray(self.d0, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        cons = tuple(self.constraints)
        if len(cons) < 1:
            raise ValueError("need q >= 1 lower-level constraints")
        if c.shape != (len(cons), c0.shape[0]):
            raise ValueError(f"c must be (q, m) = ({len(cons)}, {c0.shape[0]})")
        for con in cons:
            if con.n != d0.shape[0]:
                raise ValueError("constraint dimension disagrees with d0")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "constraints", cons)

    @property
    def m(self) -> int:
        return self.c0.shape[0]

    @property
    def n(self) -> int:
        return self.d0.shape[0]

    @property
    def q(self) -> int:
        return len(self.constraints)

    def shifts(self, x) -> np.ndarray:
        """The per-constraint constants c_j'x."""
        return self.c @ np.atleast_1d(np.asarray(x, dtype=float))

    def shifted_constraints(self, x) -> list[AffineUncertainConstraint]:
        """Constraints with b_j^0 replaced by b_j^0 - c_j'x, i.e. the
        system a_j(u)'z <= b_j(u) - c_j'x in z alone."""
        out = []
        for con, sh in zip(self.constraints, self.shifts(x)):
            b = con.b_coeffs.copy()
            b[0] -= sh
            out.append(AffineUncertainConstraint(con.a_coeffs, b, con.set))
        return out


@dataclass(frozen=True)
class LowerCertificate:
    """Dual multipliers witnessing y in Y(x); `slemma` carries the extra
    S-lemma multipliers of the ball-case feasibility blocks (None otherwise).
    `closedness` records how closed-cone regularity was established."""

    lam0: np.ndarray                 # (q,)
    lam: np.ndarray                  # (q, s_max)
    slemma: np.ndarray | None = None
    closedness: str = "unknown"

    def as_farkas(self) -> FarkasCertificate:
        return FarkasCertificate(self.lam0, self.lam)


def robust_feasible_point(prob: LowerLevelProblem, x, z,
                          tol: float = FEAS_TOL) -> bool:
    """True iff z satisfies every lower constraint for every realization:
    max_u [c_j'x + a_j(u)'z - b_j(u)] <= tol for all j."""
    shifts = prob.shifts(x)
    return all(con.worst_case(z, shift=float(sh)) <= tol
               for con, sh in zip(prob.constraints, shifts))


def verify_lower_certificate(cert: LowerCertificate, prob: LowerLevelProblem,
                             x, y, tol: float = 1e-6) -> bool:
    """Residual check of the dual system at (x, y): signs, stationarity,
    slack, and pencils, with b_j^0 shifted by -c_j'x."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = float(prob.d0 @ y)
    ok = verify_certificate(cert.as_farkas(), prob.d0, r,
                            prob.shifted_constraints(x), tol=tol)
    if not ok or cert.slemma is None:
        return ok
    for j, con in enumerate(prob.constraints):
        if cert.slemma[j] < -tol:
            return False
        M = _slemma_block(con, y, float(prob.shifts(x)[j]), float(cert.slemma[j]))
        if not psd_check(M, tol=tol):
            return False
    return True


def is_robust_solution(prob: LowerLevelProblem, x, y,
                       tol: float = FEAS_TOL) -> tuple[bool, LowerCertificate | None]:
    """Decide y in Y(x): robust feasibility plus the dual multiplier system.

    Box sets reduce to a plain LP, balls to an SOC program with the S-lemma
    feasibility blocks, anything else to the generic SDP certificate search.
    When the constraint-data cone is not certifiably closed, a failed dual
    search means "no certificate found", not "not a solution"; a warning is
    emitted in that case.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not robust_feasible_point(prob, x, y, tol=tol):
        return False, None

    closed = closedness_sufficient(prob.constraints, x, prob.c)
    sets = [con.set for con in prob.constraints]
    if all(isinstance(u, BoxSet) for u in sets):
        cert = _box_dual_lp(prob, x, y)
    elif all(isinstance(u, BallSet) for u in sets):
        cert = _ball_dual_socp(prob, x, y)
    else:
        fk = find_certificate(prob.d0, float(prob.d0 @ y),
                              prob.shifted_constraints(x))
        cert = None if fk is None else LowerCertificate(fk.lam0, fk.lam)
    if cert is None:
        if closed == "unknown":
            warnings.warn("no certificate found (closedness unverified); "
                          "the point may still be a robust solution",
                          stacklevel=2)
        return False, None
    cert = LowerCertificate(cert.lam0, cert.lam, cert.slemma, closedness=closed)
    return True, cert


def _box_dual_lp(prob: LowerLevelProblem, x, y) -> LowerCertificate | None:
    """The multiplier system as an LP: the box pencil condition is exactly
    |lam_j^i| <= gamma_i lam0_j after recentering asymmetric boxes.

    Solved with an exact LP method (HiGHS) rather than the interior-point
    conic path: the system is frequently degenerate (slack exactly zero at
    optimal y) and a simplex-type solver decides it reliably."""
    from scipy.optimize import linprog

    q, n = prob.q, prob.n
    shifts = prob.shifts(x)
    smax = max(con.s for con in prob.constraints)
    nv = q + q * smax + 1                 # lam0 | lam' | tau
    lam_off = q
    tau_idx = nv - 1

    # recentered data: a'_j0 = a_j(mid), b'_j0 = b_j(mid), gamma = half-width
    mids = [0.5 * (con.set.lo + con.set.hi) for con in prob.constraints]
    halves = [0.5 * (con.set.hi - con.set.lo) for con in prob.constraints]

    # stationarity: d0 + sum_j (lam0_j a'_j0 + sum_i lam'_j^i a_j^i) = 0
    A_eq = np.zeros((n, nv))
    for j, con in enumerate(prob.constraints):
        A_eq[:, j] = con.a_coeffs[0] + mids[j] @ con.a_coeffs[1:]
        for i in range(con.s):
            A_eq[:, lam_off + j * smax + i] = con.a_coeffs[i + 1]
    b_eq = -prob.d0

    # slack: d0'y + sum_j (lam0_j (b'_j0 - c_j'x) + sum_i lam'_j^i b_j^i) + tau <= 0
    rows, rhs = [], []
    row = np.zeros(nv)
    row[tau_idx] = 1.0
    for j, con in enumerate(prob.constraints):
        row[j] = float(con.b_coeffs[0] + mids[j] @ con.b_coeffs[1:]) - float(shifts[j])
        for i in range(con.s):
            row[lam_off + j * smax + i] = float(con.b_coeffs[i + 1])
    rows.append(row)
    rhs.append(-float(prob.d0 @ y))

    # |lam'_j^i| <= gamma_i lam0_j
    for j, con in enumerate(prob.constraints):
        for i in range(con.s):
            for sign in (1.0, -1.0):
                row = np.zeros(nv)
                row[j] = -float(halves[j][i])
                row[lam_off + j * smax + i] = sign
                rows.append(row)
                rhs.append(0.0)

    obj = np.zeros(nv)
    obj[tau_idx] = -1.0                   # maximize the slack tau
    bounds = [(0.0, MULTIPLIER_BOUND)] * q + [(None, None)] * (q * smax) + [(None, 1.0)]
    res = linprog(obj, A_ub=np.array(rows), b_ub=np.array(rhs),
                  A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    if res.status == 2:
        return None
    if not res.success:
        raise IndeterminateError(f"box dual LP failed: {res.message}")
    if res.x[tau_idx] < -FEAS_TOL:
        return None
    L0 = res.x[:q].copy()
    Lc = res.x[lam_off:lam_off + q * smax].reshape(q, smax).copy()
    # undo the recentering: lam_j^i = lam'_j^i + lam0_j * mid_i
    for j in range(q):
        Lc[j, :prob.constraints[j].s] += L0[j] * mids[j]
    return LowerCertificate(np.maximum(L0, 0.0), Lc)


def _slemma_block(con: AffineUncertainConstraint, y, shift: float,
                  lam: float) -> np.ndarray:
    """The 2x2-block matrix [[lam I, w/2], [w'/2, -lam + beta]] whose
    positive semidefiniteness certifies robust feasibility of one ball
    constraint, with w_i = b_j^i - a_j^i'y and beta = b_j^0 - a_j^0'y - c_j'x."""
    s = con.s
    w = con.b_coeffs[1:] - con.a_coeffs[1:] @ np.atleast_1d(y)
    beta = float(con.b_coeffs[0] - con.a_coeffs[0] @ np.atleast_1d(y) - shift)
    M = np.zeros((s + 1, s + 1))
    M[:s, :s] = lam * np.eye(s)
    M[:s, s] = 0.5 * w
    M[s, :s] = 0.5 * w
    M[s, s] = beta - lam
    return M


def _ball_dual_socp(prob: LowerLevelProblem, x, y) -> LowerCertificate | None:
    """The multiplier system for unit-ball sets: SOC rows
    (lam0_j, lam_j) in SOC replace the pencils, and one S-lemma LMI block
    per constraint certifies robust feasibility of y itself."""
    q, n = prob.q, prob.n
    shifts = prob.shifts(x)
    smax = max(con.s for con in prob.constraints)
    y = np.atleast_1d(np.asarray(y, dtype=float))

    prog = ConicProgram()
    socs = [prog.add_slice("soc", con.s + 1) for con in prob.constraints]
    tau = prog.add_slice("free", 1)
    prog.set_objective(tau.start, -1.0)
    cap = prog.add_slice("nonneg", 1)
    prog.add_equality([(tau.start, 1.0), (cap.start, 1.0)], 1.0)

    def lam0_idx(j):
        return socs[j].start

    def lam_idx(j, i):
        return socs[j].start + 1 + i

    for t in range(n):
        entries = []
        for j, con in enumerate(prob.constraints):
            entries.append((lam0_idx(j), float(con.a_coeffs[0][t])))
            for i in range(con.s):
                entries.append((lam_idx(j, i), float(con.a_coeffs[i + 1][t])))
        prog.add_equality(entries, -float(prob.d0[t]))

    entries = [(tau.start, 1.0)]
    for j, con in enumerate(prob.constraints):
        entries.append((lam0_idx(j), float(con.b_coeffs[0]) - float(shifts[j])))
        for i in range(con.s):
            entries.append((lam_idx(j, i), float(con.b_coeffs[i + 1])))
    sl = prog.add_slice("nonneg", 1)
    entries.append((sl.start, 1.0))
    prog.add_equality(entries, -float(prob.d0 @ y))

    # S-lemma feasibility blocks, one scalar multiplier each
    slem = prog.add_slice("nonneg", q)
    for j, con in enumerate(prob.constraints):
        s = con.s
        P = prog.add_slice("psd", dim=s + 1)
        M0 = _slemma_block(con, y, float(shifts[j]), 0.0)
        M1 = _slemma_block(con, np.zeros(prob.n), 0.0, 1.0) \
            - _slemma_block(con, np.zeros(prob.n), 0.0, 0.0)
        v0, v1 = svec(M0), svec(M1)
        for row in range(len(v0)):
            prog.add_equality([(P.start + row, 1.0), (slem.start + j, -float(v1[row]))],
                              float(v0[row]))

    for j in range(q):
        s3 = prog.add_slice("nonneg", 1)
        prog.add_equality([(lam0_idx(j), 1.0), (s3.start, 1.0)],
                          MULTIPLIER_BOUND)

    sol = prog.solve()
    if sol.status == "infeasible":
        return None
    if sol.status != "optimal":
        raise IndeterminateError(f"ball dual SOCP failed: {sol.status}")
    if sol.primal[tau.start] < -FEAS_TOL:
        return None
    L0 = np.array([max(sol.primal[lam0_idx(j)], 0.0) for j in range(q)])
    Lc = np.zeros((q, smax))
    for j, con in enumerate(prob.constraints):
        for i in range(con.s):
            Lc[j, i] = sol.primal[lam_idx(j, i)]
    slemma = np.maximum(sol.primal[slem.start:slem.start + q].copy(), 0.0)
    return LowerCertificate(L0, Lc, slemma=slemma)


def solve_lower_robust(prob: LowerLevelProblem, x) -> tuple[float, np.ndarray]:
    """Brute-force oracle: solve the robust counterpart directly after
    replacing each semi-infinite constraint with its finite equivalent
    (extreme points for boxes, norm rows for balls).  Returns
    (c0'x + d0'z*, z*)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    shifts = prob.shifts(x)
    sets = [con.set for con in prob.constraints]
    base = float(prob.c0 @ x)

    if all(isinstance(u, BoxSet) for u in sets):
        from scipy.optimize import linprog
        A_ub, b_ub = [], []
        for con, sh in zip(prob.constraints, shifts):
            for u in box_extreme_points(list(zip(con.set.lo, con.set.hi))):
                A_ub.append(con.a(u))
                b_ub.append(con.b(u) - float(sh))
        res = linprog(prob.d0, A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                      bounds=(None, None))
        if res.status == 2:
            raise InfeasibleProblemError("robust lower level infeasible")
        if res.status == 3:
            raise UnboundedProblemError("robust lower level unbounded")
        if not res.success:
            raise IndeterminateError(f"lower-level LP failed: {res.message}")
        return base + float(prob.d0 @ res.x), np.asarray(res.x, dtype=float)

    if all(isinstance(u, BallSet) for u in sets):
        prog = ConicProgram()
        z = prog.add_slice("free", prob.n)
        for t in range(prob.n):
            prog.set_objective(z.start + t, float(prob.d0[t]))
        for con, sh in zip(prob.constraints, shifts):
            _add_robust_leq(prog, con, float(sh), z)
        sol = prog.solve()
        if sol.status == "infeasible":
            raise InfeasibleProblemError("robust lower level infeasible")
        if sol.status == "unbounded":
            raise UnboundedProblemError("robust lower level unbounded")
        if sol.status != "optimal":
            raise IndeterminateError(f"lower-level SOCP failed: {sol.status}")
        zstar = sol.primal[z.start:z.start + prob.n].copy()
        return base + float(prob.d0 @ zstar), zstar

    raise TypeError("brute-force oracle supports box or ball sets only")
