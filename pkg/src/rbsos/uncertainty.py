"""Uncertainty sets (spectrahedron, box, ball), their LMI encodings, and the
regularity checks (closed cone / Slater) the certificate theorems hypothesize.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, psd_check, svec

# Extreme-point enumerations are exponential by design; fail fast past this.
DEFAULT_ENUM_CAP = 4096

SLATER_SLACK_TOL = 1e-7


def enum_cap() -> int:
    v = os.environ.get("RBSOS_MAX_ENUM")
    return int(v) if v else DEFAULT_ENUM_CAP


class UnboundedSetError(RuntimeError):
    """Raised when a supposedly compact spectrahedron lets an affine
    functional grow without bound."""


class IndeterminateError(RuntimeError):
    """A conic solve failed numerically; the query result is unknown."""


@dataclass(frozen=True)
class Spectrahedron:
    """The set {u in R^s : A0 + sum_i u_i A_i >= 0} for symmetric matrices."""

    matrices: tuple  # (A0, A1, ..., As), each symmetric p x p ndarray

    def __post_init__(self):
        mats = tuple(np.asarray(M, dtype=float) for M in self.matrices)
        object.__setattr__(self, "matrices", mats)
        p = mats[0].shape[0]
        for M in mats:
            if M.shape != (p, p):
                raise ValueError("pencil matrices must share a square dimension")
            if np.max(np.abs(M - M.T)) > 1e-10 * (1.0 + np.max(np.abs(M))):
                raise ValueError("pencil matrices must be symmetric")

    @property
    def s(self) -> int:
        return len(self.matrices) - 1

    @property
    def p(self) -> int:
        return self.matrices[0].shape[0]

    def pencil(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        M = self.matrices[0].copy()
        for i in range(self.s):
            M += u[i] * self.matrices[i + 1]
        return M

    def contains(self, u, tol: float = 1e-9) -> bool:
        return psd_check(self.pencil(u), tol)


@dataclass(frozen=True)
class BoxSet:
    """Interval box [lo_1,hi_1] x ... x [lo_s,hi_s].  The symmetric form
    [-gamma, gamma] is the lower-level V_s; general intervals appear in the
    upper-level boxes."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @staticmethod
    def symmetric(gamma) -> "BoxSet":
        g = np.atleast_1d(np.asarray(gamma, dtype=float))
        if np.any(g <= 0):
            raise ValueError("gamma must be positive")
        return BoxSet(-g, g)

    @property
    def s(self) -> int:
        return self.lo.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.lo, -self.hi))

    @property
    def gamma(self) -> np.ndarray:
        if not self.is_symmetric:
            raise ValueError("gamma only defined for symmetric boxes")
        return self.hi

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))

    def extreme_points(self) -> list[np.ndarray]:
        return box_extreme_points(list(zip(self.lo, self.hi)))


@dataclass(frozen=True)
class BallSet:
    """Closed unit ball in R^s."""

    dim: int

    @property
    def s(self) -> int:
        return self.dim

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.linalg.norm(u) <= 1.0 + tol)


UncertaintySet = Spectrahedron | BoxSet | BallSet


@dataclass(frozen=True)
class AffineUncertainConstraint:
    """One robust inequality  a(u)'z <= b(u) for all u in `set`, where
    a(u) = a0 + sum u_i a_i and b(u) = b0 + sum u_i b_i.

    a_coeffs has shape (s+1, n): row 0 is a0, row i is a_i.
    b_coeffs has shape (s+1,).
    """

    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    set: UncertaintySet

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_coeffs, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_coeffs, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("a_coeffs and b_coeffs disagree on s")
        if a.shape[0] != self.set.s + 1:
            raise ValueError(f"coefficients give s={a.shape[0]-1} but set has s={self.set.s}")
        object.__setattr__(self, "a_coeffs", a)
        object.__setattr__(self, "b_coeffs", b)

    @property
    def s(self) -> int:
        return self.a_coeffs.shape[0] - 1

    @property
    def n(self) -> int:
        return self.a_coeffs.shape[1]

    def a(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.a_coeffs[0] + u @ self.a_coeffs[1:]

    def b(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(self.b_coeffs[0] + u @ self.b_coeffs[1:])

    def violation_affine(self, z, shift: float = 0.0) -> tuple[float, np.ndarray]:
        """Coefficients (c0, cvec) of u |-> shift + a(u)'z - b(u)."""
        z = np.asarray(z, dtype=float)
        c0 = shift + float(self.a_coeffs[0] @ z) - self.b_coeffs[0]
        cvec = self.a_coeffs[1:] @ z - self.b_coeffs[1:]
        return c0, cvec

    def worst_case(self, z, shift: float = 0.0) -> float:
        """max over u in the set of shift + a(u)'z - b(u)."""
        c0, cvec = self.violation_affine(z, shift)
        return max_affine_over_set(c0, cvec, self.set)


def box_to_spectrahedron(gamma) -> Spectrahedron:
    """Diagonal 2s x 2s pencil whose feasible set is {u : |u_i| <= gamma_i}:
    A0 = diag(gamma, gamma), A_i = diag(e_i, -e_i)."""
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g <= 0):
        raise ValueError("gamma must be positive")
    s = g.shape[0]
    A0 = np.diag(np.concatenate([g, g]))
    mats = [A0]
    for i in range(s):
        d = np.zeros(2 * s)
        d[i] = 1.0
        d[s + i] = -1.0
        mats.append(np.diag(d))
    return Spectrahedron(tuple(mats))


def ball_to_spectrahedron(s: int) -> Spectrahedron:
    """Arrow pencil [[I_s, u], [u', 1]]; by the Schur complement its feasible
    set is the closed unit ball."""
    if s < 1:
        raise ValueError("dimension must be >= 1")
    A0 = np.eye(s + 1)
    A0[s, s] = 1.0
    mats = [A0]
    for i in range(s):
        M = np.zeros((s + 1, s + 1))
        M[i, s] = M[s, i] = 1.0
        mats.append(M)
    return Spectrahedron(tuple(mats))


def box_extreme_points(bounds) -> list[np.ndarray]:
    """Vertices of the interval box, in binary-counting order (first
    coordinate most significant, lo before hi).  Degenerate coordinates
    (lo == hi) collapse before enumeration, so duplicates never appear."""
    lo = np.array([float(b[0]) for b in bounds])
    hi = np.array([float(b[1]) for b in bounds])
    if np.any(lo > hi):
        raise ValueError("box needs lo <= hi")
    active = [i for i in range(len(bounds)) if lo[i] != hi[i]]
    count = 1 << len(active)
    if count > enum_cap():
        raise OverflowError(
            f"2^{len(active)} = {count} extreme points exceed cap {enum_cap()} "
            "(set RBSOS_MAX_ENUM to raise)")
    pts = []
    for k in range(count):
        u = lo.copy()
        for pos, i in enumerate(active):
            if (k >> (len(active) - 1 - pos)) & 1:
                u[i] = hi[i]
        pts.append(u)
    return pts


def max_affine_over_set(c0: float, cvec, uset: UncertaintySet) -> float:
    """Maximum of c0 + cvec'u over the set.  Exact for boxes (extreme points)
    and balls (norm); SDP for general spectrahedra."""
    return max_affine_argmax(c0, cvec, uset)[0]


def _pencil_structure(spec: Spectrahedron) -> str:
    """Recognize pencils with exactly evaluable feasible sets: 'diagonal'
    (a polyhedron; linear maxima via an LP), 'ball' (the arrow pencil
    [[I, u], [u', 1]], whose set is the unit ball), else 'generic'."""
    mats = spec.matrices
    if all(np.count_nonzero(M - np.diag(np.diagonal(M))) == 0 for M in mats):
        return "diagonal"
    s, p = spec.s, spec.p
    if p == s + 1 and np.array_equal(mats[0], np.eye(p)):
        for i, M in enumerate(mats[1:]):
            E = np.zeros((p, p))
            E[i, s] = E[s, i] = 1.0
            if not np.array_equal(M, E):
                return "generic"
        return "ball"
    return "generic"


def max_affine_argmax(c0: float, cvec, uset: UncertaintySet) -> tuple[float, np.ndarray]:
    """Maximum of c0 + cvec'u over the set together with a maximizer u*.

    Boxes, balls, diagonal pencils, and ball-structured arrow pencils are
    evaluated exactly (vertex LP or closed form); only genuinely generic
    spectrahedra fall through to an interior-point SDP, whose value then
    carries solver-tolerance error."""
    cvec = np.atleast_1d(np.asarray(cvec, dtype=float))
    if isinstance(uset, BoxSet):
        u = np.where(cvec >= 0, uset.hi, uset.lo)
        return float(c0 + cvec @ u), u
    if isinstance(uset, BallSet):
        nrm = float(np.linalg.norm(cvec))
        u = cvec / nrm if nrm > 0 else np.zeros(uset.s)
        return float(c0 + nrm), u
    spec = uset
    kind = _pencil_structure(spec)
    if kind == "ball":
        nrm = float(np.linalg.norm(cvec))
        u = cvec / nrm if nrm > 0 else np.zeros(spec.s)
        return float(c0 + nrm), u
    if kind == "diagonal":
        from scipy.optimize import linprog
        D = np.column_stack([np.diagonal(M) for M in spec.matrices[1:]])
        d0 = np.diagonal(spec.matrices[0])
        res = linprog(-cvec, A_ub=-D, b_ub=d0, bounds=(None, None))
        if res.status == 3:
            raise UnboundedSetError("affine functional unbounded over spectrahedron")
        if not res.success:
            raise IndeterminateError(f"diagonal pencil LP failed: {res.message}")
        return float(c0 + cvec @ res.x), np.asarray(res.x, dtype=float)
    val, u = _max_linear_over_spectrahedron_argmax(cvec, spec)
    return float(c0 + val), u


def _max_linear_over_spectrahedron(cvec: np.ndarray, spec: Spectrahedron) -> float:
    return _max_linear_over_spectrahedron_argmax(cvec, spec)[0]


def _max_linear_over_spectrahedron_argmax(cvec, spec: Spectrahedron):
    s, p = spec.s, spec.p
    prog = ConicProgram()
    u = prog.add_slice("free", s)
    P = prog.add_slice("psd", dim=p)
    for i in range(s):
        prog.set_objective(u.start + i, -float(cvec[i]))
    # svec(A0 + sum u_i A_i) - svec(P) = 0
    v0 = svec(spec.matrices[0])
    vi = [svec(M) for M in spec.matrices[1:]]
    for r in range(len(v0)):
        entries = [(P.start + r, 1.0)]
        for i in range(s):
            if vi[i][r] != 0.0:
                entries.append((u.start + i, -vi[i][r]))
        prog.add_equality(entries, v0[r])
    sol = prog.solve()
    if sol.status == "unbounded":
        raise UnboundedSetError("affine functional unbounded over spectrahedron")
    if sol.status != "optimal":
        raise IndeterminateError(f"spectrahedron max failed: {sol.status}")
    return -sol.objective, sol.primal[u.start:u.start + s].copy()


def worst_case_rows(constraint: AffineUncertainConstraint, shift: float):
    """Reduce the semi-infinite robust inequality shift + a(u)'z - b(u) <= 0
    to finitely many conic rows over (z, extra variables).

    Returns (kind, payload):
      - box:  ("linear", list of (avec, const)) meaning avec'z + const <= 0
      - ball: ("soc", (a0, c0, Amat, cvec)) meaning
              a0'z + c0 + || Amat z - cvec || <= 0
      - spectrahedron: handled by callers through the LMI dual (see
        lowerlevel/farkas modules).
    """
    uset = constraint.set
    if isinstance(uset, BoxSet):
        rows = []
        for u in uset.extreme_points():
            rows.append((constraint.a(u), shift - constraint.b(u)))
        return "linear", rows
    if isinstance(uset, BallSet):
        a0 = constraint.a_coeffs[0]
        c0 = shift - constraint.b_coeffs[0]
        Amat = constraint.a_coeffs[1:]
        cvec = constraint.b_coeffs[1:]
        return "soc", (a0, c0, Amat, cvec)
    raise TypeError("worst_case_rows supports box and ball sets only")


def slater_check(constraints, x=None, c_rows=None, tol: float = SLATER_SLACK_TOL):
    """Decide whether some z makes every robust inequality strictly negative:
    max_u [c_j'x + a_j(u)'z - b_j(u)] < 0 for all j.

    `c_rows` gives the per-constraint shifts c_j'x (zero when absent).
    Implemented by maximizing a common slack delta subject to
    worst-case value <= -delta and thresholding delta at `tol`.
    Returns (bool, witness z or None).
    """
    constraints = list(constraints)
    if not constraints:
        return True, None
    shifts = _shifts(constraints, x, c_rows)
    n = constraints[0].n

    prog = ConicProgram()
    z = prog.add_slice("free", n)
    delta = prog.add_slice("free", 1)
    prog.set_objective(delta.start, -1.0)  # maximize delta
    # delta <= 1 keeps the slack bounded
    capslack = prog.add_slice("nonneg", 1)
    prog.add_equality([(delta.start, 1.0), (capslack.start, 1.0)], 1.0)

    for con, shift in zip(constraints, shifts):
        _add_robust_leq(prog, con, shift, z, extra=[(delta.start, 1.0)])

    sol = prog.solve()
    if sol.status == "infeasible":
        return False, None
    if sol.status != "optimal":
        raise IndeterminateError(f"slater check solve failed: {sol.status}")
    dval = sol.primal[delta.start]
    if dval <= tol:
        return False, None
    return True, sol.primal[z.start:z.start + n].copy()


def _shifts(constraints, x, c_rows):
    if c_rows is None:
        return [0.0] * len(constraints)
    x = np.asarray(x, dtype=float)
    return [float(np.dot(row, x)) for row in c_rows]


def _add_robust_leq(prog: ConicProgram, con: AffineUncertainConstraint,
                    shift: float, z, extra=()):
    """Append rows enforcing max_u [shift + a(u)'z - b(u)] + extra <= 0 to a
    conic program, where z is a free slice of length con.n and `extra` is a
    list of (var index, coeff) terms added to the left side."""
    n = con.n
    uset = con.set
    if isinstance(uset, (BoxSet, BallSet)):
        kind, payload = worst_case_rows(con, shift)
        if kind == "linear":
            for avec, const in payload:
                slack = prog.add_slice("nonneg", 1)
                entries = [(z.start + t, float(avec[t])) for t in range(n)]
                entries += [(slack.start, 1.0)] + list(extra)
                prog.add_equality(entries, -const)
        else:
            a0, c0, Amat, cvec = payload
            s = Amat.shape[0]
            soc = prog.add_slice("soc", s + 1)
            # head: -(a0'z + c0 + extra) ; tail: Amat z - cvec
            entries = [(soc.start, 1.0)] + [(z.start + t, float(a0[t])) for t in range(n)]
            entries += list(extra)
            prog.add_equality(entries, -c0)
            for i in range(s):
                entries = [(soc.start + 1 + i, 1.0)]
                entries += [(z.start + t, -float(Amat[i, t])) for t in range(n)]
                prog.add_equality(entries, -float(cvec[i]))
    elif isinstance(uset, Spectrahedron):
        # dual of max_u c(z)'u over the pencil: exists Z >= 0 with
        # <A_i, Z> = -(a_i'z - b_i) and shift + a0'z - b0 + <A0, Z> + extra <= 0
        s, p = uset.s, uset.p
        Z = prog.add_slice("psd", dim=p)
        v0 = svec(uset.matrices[0])
        vi = [svec(M) for M in uset.matrices[1:]]
        L = len(v0)
        for i in range(s):
            entries = [(Z.start + r, float(vi[i][r])) for r in range(L)]
            entries += [(z.start + t, float(con.a_coeffs[i + 1][t])) for t in range(n)]
            prog.add_equality(entries, float(con.b_coeffs[i + 1]))
        slack = prog.add_slice("nonneg", 1)
        entries = [(Z.start + r, float(v0[r])) for r in range(L)]
        entries += [(z.start + t, float(con.a_coeffs[0][t])) for t in range(n)]
        entries += [(slack.start, 1.0)] + list(extra)
        prog.add_equality(entries, float(con.b_coeffs[0]) - shift)
    else:
        raise TypeError(f"unsupported set {type(uset)}")


def closedness_sufficient(constraints, x=None, c_rows=None) -> str:
    """Classify the closed-cone regularity of the constraint data:
    'polytope' when every set is a box, 'slater' when a strictly feasible z
    exists, else 'unknown' (closedness is not disproved; certificate
    characterizations may be incomplete)."""
    constraints = list(constraints)
    if all(isinstance(c.set, BoxSet) for c in constraints):
        return "polytope"
    ok, _ = slater_check(constraints, x, c_rows)
    return "slater" if ok else "unknown"
