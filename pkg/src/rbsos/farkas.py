"""Generalized non-homogeneous Farkas certificates for uncertain linear
systems over spectrahedra: certificate search (an SDP feasibility problem),
verification, and a sampling oracle for the primal implication.

The certified statement: every x with a_j(u)'x <= b_j(u) for all u in U_j and
all j also satisfies p'x >= r.  A certificate is multipliers (lam_j^0 >= 0,
lam_j^i free) with

    p + sum_j (lam_j^0 a_j^0 + sum_i lam_j^i a_j^i) = 0
    -r - sum_j (lam_j^0 b_j^0 + sum_i lam_j^i b_j^i) >= 0
    lam_j^0 A_j^0 + sum_i lam_j^i A_j^i >= 0   for each j.

Such a certificate can fail to exist even when the implication holds, if the
cone generated by the constraint data is not closed; searching therefore
distinguishes a *certified* "none" (solver infeasibility certificate) from an
indeterminate numerical failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, psd_check, svec
from .uncertainty import (AffineUncertainConstraint, BallSet, BoxSet,
                          IndeterminateError, Spectrahedron,
                          box_to_spectrahedron, ball_to_spectrahedron,
                          max_affine_argmax, _add_robust_leq)

VERIFY_TOL = 1e-6


def _as_spectrahedron(uset) -> Spectrahedron:
    if isinstance(uset, Spectrahedron):
        return uset
    if isinstance(uset, BoxSet):
        if not uset.is_symmetric:
            # shift to the symmetric form is not defined here; encode the
            # general interval box directly as a diagonal pencil
            mid = 0.5 * (uset.lo + uset.hi)
            half = 0.5 * (uset.hi - uset.lo)
            s = uset.s
            A0 = np.diag(np.concatenate([half + mid, half - mid]))
            mats = [A0]
            for i in range(s):
                d = np.zeros(2 * s)
                d[i] = 1.0
                d[s + i] = -1.0
                mats.append(np.diag(d))
            return Spectrahedron(tuple(mats))
        return box_to_spectrahedron(uset.gamma)
    if isinstance(uset, BallSet):
        return ball_to_spectrahedron(uset.s)
    raise TypeError(f"unsupported set {type(uset)}")


@dataclass
class FarkasCertificate:
    """Per-constraint multipliers: lam0[j] >= 0 and lam[j] in R^s."""

    lam0: np.ndarray          # shape (q,)
    lam: np.ndarray           # shape (q, s)

    def pencil(self, j: int, spec: Spectrahedron) -> np.ndarray:
        M = self.lam0[j] * spec.matrices[0]
        for i in range(spec.s):
            M = M + self.lam[j, i] * spec.matrices[i + 1]
        return M


MULTIPLIER_BOUND = 1e4


def find_certificate(p, r: float, constraints,
                     bound: float = MULTIPLIER_BOUND) -> FarkasCertificate | None:
    """Search for a Theorem-style dual certificate by SDP feasibility.

    Returns None only when the solver *proves* the multiplier system
    infeasible; numerical failure raises IndeterminateError.  The objective
    maximizes the inequality slack (capped at 1) so a returned certificate
    is strictly slack whenever one exists.

    Multipliers are restricted to |lam| <= bound.  Without a bound the
    multiplier system can be weakly infeasible (empty but asymptotically
    feasible along a diverging lam sequence, which happens exactly when the
    constraint-data cone is not closed), and no solver can certify weak
    infeasibility; the bound makes infeasibility strict and certifiable
    while keeping every certificate of reasonable norm reachable.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    constraints = list(constraints)
    q = len(constraints)
    n = p.shape[0]
    specs = [_as_spectrahedron(c.set) for c in constraints]

    prog = ConicProgram()
    lam0 = prog.add_slice("nonneg", q)
    lam_slices = [prog.add_slice("free", c.s) for c in constraints]
    tau = prog.add_slice("nonneg", 1)       # inequality slack
    cap = prog.add_slice("nonneg", 1)
    prog.set_objective(tau.start, -1.0)     # maximize slack
    prog.add_equality([(tau.start, 1.0), (cap.start, 1.0)], 1.0)

    # |lam| <= bound via nonneg slacks
    for j in range(q):
        s_up = prog.add_slice("nonneg", 1)
        prog.add_equality([(lam0.start + j, 1.0), (s_up.start, 1.0)], bound)
        for i in range(constraints[j].s):
            var = lam_slices[j].start + i
            s_hi = prog.add_slice("nonneg", 1)
            s_lo = prog.add_slice("nonneg", 1)
            prog.add_equality([(var, 1.0), (s_hi.start, 1.0)], bound)
            prog.add_equality([(var, -1.0), (s_lo.start, 1.0)], bound)

    # stationarity: p + sum_j (lam_j^0 a_j^0 + sum_i lam_j^i a_j^i) = 0
    for t in range(n):
        entries = []
        for j, c in enumerate(constraints):
            entries.append((lam0.start + j, float(c.a_coeffs[0][t])))
            for i in range(c.s):
                entries.append((lam_slices[j].start + i, float(c.a_coeffs[i + 1][t])))
        prog.add_equality(entries, -p[t])

    # slack: -r - sum_j (lam_j^0 b_j^0 + sum lam_j^i b_j^i) = tau >= 0
    entries = [(tau.start, 1.0)]
    for j, c in enumerate(constraints):
        entries.append((lam0.start + j, float(c.b_coeffs[0])))
        for i in range(c.s):
            entries.append((lam_slices[j].start + i, float(c.b_coeffs[i + 1])))
    prog.add_equality(entries, -float(r))

    # pencils: lam_j^0 A_j^0 + sum_i lam_j^i A_j^i = P_j >= 0
    for j, spec in enumerate(specs):
        P = prog.add_slice("psd", dim=spec.p)
        v0 = svec(spec.matrices[0])
        vi = [svec(M) for M in spec.matrices[1:]]
        for row in range(len(v0)):
            entries = [(P.start + row, 1.0), (lam0.start + j, -float(v0[row]))]
            for i in range(spec.s):
                if vi[i][row] != 0.0:
                    entries.append((lam_slices[j].start + i, -float(vi[i][row])))
            prog.add_equality(entries, 0.0)

    sol = prog.solve()
    if sol.status == "infeasible":
        return None
    if sol.status != "optimal":
        raise IndeterminateError(f"certificate search failed: {sol.status}")
    lam0_v = sol.primal[lam0.start:lam0.start + q].copy()
    smax = max((c.s for c in constraints), default=0)
    lam_v = np.zeros((q, smax))
    for j, sl in enumerate(lam_slices):
        lam_v[j, :constraints[j].s] = sol.primal[sl.start:sl.start + constraints[j].s]
    return FarkasCertificate(lam0=lam0_v, lam=lam_v)


def verify_certificate(cert: FarkasCertificate, p, r: float, constraints,
                       tol: float = VERIFY_TOL) -> bool:
    """Check all certificate conditions at tolerance tol: multiplier signs,
    stationarity residual, slack, and PSD pencils."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    constraints = list(constraints)
    if np.any(cert.lam0 < -tol):
        return False
    resid = p.astype(float).copy()
    slack = -float(r)
    for j, c in enumerate(constraints):
        resid = resid + cert.lam0[j] * c.a_coeffs[0]
        slack -= cert.lam0[j] * c.b_coeffs[0]
        for i in range(c.s):
            resid = resid + cert.lam[j, i] * c.a_coeffs[i + 1]
            slack -= cert.lam[j, i] * c.b_coeffs[i + 1]
    if np.linalg.norm(resid) > tol:
        return False
    if slack < -tol:
        return False
    for j, c in enumerate(constraints):
        spec = _as_spectrahedron(c.set)
        if not psd_check(cert.pencil(j, spec), tol):
            return False
    return True


# Samples count as feasible only below this violation; near-boundary points
# with O(sqrt(eps)) feasibility error would corrupt the implication check.
KEEP_TOL = 1e-12


def _worst_violation(constraints, x) -> tuple[float, np.ndarray]:
    """Largest robust violation over the constraints and the gradient
    a_j(u*) of the active affine piece."""
    best, grad = -np.inf, None
    for c in constraints:
        c0, cvec = c.violation_affine(x)
        val, u = max_affine_argmax(c0, cvec, c.set)
        if val > best:
            best, grad = val, c.a(u)
    return best, grad


def refine_feasible(constraints, x, max_iters: int = 200):
    """Drive a point onto the feasible set by successive projection onto the
    supporting halfspace a(u*)'x <= b(u*) of the most violated robust
    constraint (u* the worst-case realization).  Each halfspace contains the
    feasible set, so the iteration is Fejer monotone on convex data and
    converges without a strict-interior assumption.  Returns the refined
    point and its final violation."""
    x = np.asarray(x, dtype=float).copy()
    v = np.inf
    for _ in range(max_iters):
        v, g = _worst_violation(constraints, x)
        if v <= 0.0:
            break
        gn = float(g @ g)
        if gn <= 1e-30:
            break
        x -= (v / gn) * g
    else:
        v, _ = _worst_violation(constraints, x)
    return x, v


def sample_feasible_points(constraints, n_samples: int, box_radius: float = 2.0,
                           seed: int = 0) -> list[np.ndarray]:
    """Sample points satisfying every robust inequality: rejection sampling
    on a bounded box, with infeasible draws refined onto the feasible set by
    `refine_feasible`.  The refinement keeps thin feasible sets -- which
    arise exactly in the non-closed-cone instances -- reachable, and avoids
    the O(sqrt(solver tol)) boundary error an interior-point projection
    would leave.  Only points with violation <= KEEP_TOL are returned."""
    constraints = list(constraints)
    n = constraints[0].n
    rng = np.random.default_rng(seed)
    out: list[np.ndarray] = []
    for _ in range(n_samples):
        x = rng.uniform(-box_radius, box_radius, size=n)
        v, _ = _worst_violation(constraints, x)
        if v <= 0.0:
            out.append(x)
            continue
        x, v = refine_feasible(constraints, x)
        if v <= KEEP_TOL:
            out.append(x)
    return out


def check_implication_sampled(p, r: float, constraints, n_samples: int = 1000,
                              tol: float = 1e-6, box_radius: float = 2.0,
                              seed: int = 0) -> bool:
    """Primal-side oracle: returns False iff a sampled feasible x violates
    p'x >= r - tol.  True is evidence for the implication, not proof."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    pts = sample_feasible_points(constraints, n_samples, box_radius, seed)
    return all(float(p @ x) >= r - tol for x in pts)
