"""Bilevel problem container and the single-level reformulation.

The bilevel program minimizes a polynomial f(x, y) subject to l uncertain
upper-level inequalities a'x + b'y <= c whose coefficient vector (a, b, c)
ranges over a box, and the lower-level optimality condition y in Y(x) for an
uncertain LP.  Replacing the semi-infinite constraints by box extreme points
and the lower-level argmin by its normalized dual multiplier system turns
the whole problem into one polynomial program over (x, y, mu) with

    mu = (mu_0, mu_1..mu_q, mu_1^1..mu_q^1, ..., mu_1^s..mu_q^s),

inequality family g_1..g_L (L = l*2^(m+n+1) + q*(2^s+s+1) + 2 before
pruning) and equalities h_1..h_{n+1}.  The g's come in six blocks, in order:
upper extreme points, lower extreme points, mu_0 >= 0, mu_k >= 0, the dual
slack inequality, and the box-dual rows (gamma_i mu_k)^2 - (mu_k^i)^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lowerlevel import LowerLevelProblem, _box_dual_lp, _slemma_block
from .poly import Monomial, Polynomial, VariableLayout
from .conic import ConicProgram, svec
from .uncertainty import (AffineUncertainConstraint, BallSet, BoxSet,
                          IndeterminateError, Spectrahedron, enum_cap)

FEAS_TOL = 1e-8
MU0_THRESHOLD = 1e-7


def box_corners(lo, hi) -> list[np.ndarray]:
    """All 2^d corners of [lo, hi] in binary-counting order (first coordinate
    most significant, lo before hi).  Degenerate coordinates are *not*
    collapsed: the reformulation's count identity enumerates every corner,
    duplicates included."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.shape[0]
    if 1 << d > enum_cap():
        raise OverflowError(
            f"2^{d} corners exceed cap {enum_cap()} (set RBSOS_MAX_ENUM to raise)")
    out = []
    for k in range(1 << d):
        u = lo.copy()
        for pos in range(d):
            if (k >> (d - 1 - pos)) & 1:
                u[pos] = hi[pos]
        out.append(u)
    return out


@dataclass(frozen=True)
class BoxUpperConstraint:
    """One upper-level inequality a'x + b'y <= c whose data (a, b, c) ranges
    over the box [a_lo, a_hi] x [b_lo, b_hi] x [c_lo, c_hi]."""

    a_lo: np.ndarray
    a_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray
    c_lo: float
    c_hi: float

    def __post_init__(self):
        for name in ("a_lo", "a_hi", "b_lo", "b_hi"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "c_lo", float(self.c_lo))
        object.__setattr__(self, "c_hi", float(self.c_hi))
        if self.a_lo.shape != self.a_hi.shape or self.b_lo.shape != self.b_hi.shape:
            raise ValueError("bound shapes disagree")
        if (np.any(self.a_lo > self.a_hi) or np.any(self.b_lo > self.b_hi)
                or self.c_lo > self.c_hi):
            raise ValueError("box needs lo <= hi")

    @property
    def m(self) -> int:
        return self.a_lo.shape[0]

    @property
    def n(self) -> int:
        return self.b_lo.shape[0]

    def corners(self) -> list[tuple[np.ndarray, np.ndarray, float]]:
        """The 2^(m+n+1) data corners (a, b, c), duplicates included."""
        lo = np.concatenate([self.a_lo, self.b_lo, [self.c_lo]])
        hi = np.concatenate([self.a_hi, self.b_hi, [self.c_hi]])
        m = self.m
        return [(u[:m], u[m:-1], float(u[-1])) for u in box_corners(lo, hi)]

    def worst_violation(self, x, y) -> float:
        """max over the data box of a'x + b'y - c (exact interval arithmetic)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        val = float(np.maximum(self.a_lo * x, self.a_hi * x).sum())
        val += float(np.maximum(self.b_lo * y, self.b_hi * y).sum())
        return val - self.c_lo


@dataclass(frozen=True)
class BilevelProblem:
    """f is a Polynomial in the m+n variables (x_1..x_m, y_1..y_n)."""

    f: Polynomial
    m: int
    n: int
    upper: tuple
    lower: LowerLevelProblem
    assert_coercive: bool = False
    feasible_point: tuple | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.f.nvars != self.m + self.n:
            raise ValueError("objective must live in m+n variables")
        if self.lower.m != self.m or self.lower.n != self.n:
            raise ValueError("lower-level dimensions disagree")
        object.__setattr__(self, "upper", tuple(self.upper))
        kinds = {type(c.set) for c in self.lower.constraints}
        if len(kinds) > 1:
            raise ValueError("lower-level uncertainty kinds must be homogeneous")
        upper_box = all(isinstance(u, BoxUpperConstraint) for u in self.upper)
        upper_ball = all(isinstance(u, AffineUncertainConstraint) for u in self.upper)
        if not (upper_box or upper_ball):
            raise ValueError("upper-level constraint kinds must be homogeneous")
        if self.feasible_point is not None:
            pt = tuple(float(v) for v in self.feasible_point)
            if len(pt) != self.m + self.n:
                raise ValueError("feasible_point must have length m+n")
            object.__setattr__(self, "feasible_point", pt)

    @property
    def l(self) -> int:
        return len(self.upper)

    @property
    def q(self) -> int:
        return self.lower.q

    @property
    def s(self) -> int:
        return self.lower.constraints[0].s

    @property
    def is_box(self) -> bool:
        return isinstance(self.lower.constraints[0].set, BoxSet)

    def layout(self) -> VariableLayout:
        return VariableLayout(self.m, self.n, self.q, self.s)


@dataclass(frozen=True)
class SingleLevelProgram:
    """The g/h constraint family over (x, y, mu).  index_tags records each
    g's provenance block: upper-extreme, lower-extreme, mu0-sign, muk-sign,
    dual-slack, or dual-box."""

    layout: VariableLayout
    g: tuple[Polynomial, ...]
    h: tuple[Polynomial, ...]
    index_tags: tuple[str, ...]


def _linear(coeffs, const: float, nvars: int) -> Polynomial:
    """const + sum coeffs[idx] * var_idx as a Polynomial."""
    terms = {}
    if abs(const) > 0:
        terms[Monomial(())] = float(const)
    for idx, c in coeffs:
        if c != 0.0:
            terms[Monomial(((idx, 1),))] = terms.get(Monomial(((idx, 1),)), 0.0) + float(c)
    return Polynomial(terms, nvars)


def _is_positive_multiple(p: Polynomial, earlier: Polynomial, tol: float = 1e-12) -> bool:
    if set(p.terms) != set(earlier.terms) or not p.terms:
        return False
    mono = next(iter(p.terms))
    ratio = p.terms[mono] / earlier.terms[mono]
    if ratio <= 0:
        return False
    scale = max(p.coeff_norm(), 1.0)
    return all(abs(p.terms[m] - ratio * earlier.terms[m]) <= tol * scale
               for m in p.terms)


def build_single_level(prob: BilevelProblem, prune: str = "null") -> SingleLevelProgram:
    """Materialize the g/h family of the single-level reformulation.

    prune selects post-processing: "none" keeps all L polynomials (the count
    identity holds), "null" drops identically-zero g's, and "scalar"
    additionally drops positive scalar multiples of earlier g's (the
    dedup used in the worked convex example).  All modes define the same
    feasible set; provenance tags survive pruning."""
    if prune not in ("none", "null", "scalar"):
        raise ValueError(f"unknown prune mode {prune!r}")
    if not prob.is_box:
        raise TypeError("single-level reformulation requires box uncertainty")
    lay = prob.layout()
    N = lay.nvars
    m, n, q, s = prob.m, prob.n, prob.q, prob.s

    for con in prob.lower.constraints:
        if not con.set.is_symmetric:
            raise ValueError("lower-level boxes must be symmetric [-gamma, gamma]")
        if np.any(con.set.gamma <= 0):
            raise ValueError("lower-level box half-widths must be positive")

    gs: list[Polynomial] = []
    tags: list[str] = []

    def add(p: Polynomial, tag: str):
        gs.append(p)
        tags.append(tag)

    # (1) upper-level extreme points: c - a'x - b'y >= 0
    for up in prob.upper:
        for avec, bvec, cval in up.corners():
            coeffs = [(lay.x(t), -avec[t]) for t in range(m)]
            coeffs += [(lay.y(t), -bvec[t]) for t in range(n)]
            add(_linear(coeffs, cval, N), "upper-extreme")

    # (2) lower-level extreme points: b_k(u) - c_k'x - a_k(u)'y >= 0
    for k, con in enumerate(prob.lower.constraints):
        for u in box_corners(con.set.lo, con.set.hi):
            a_u = con.a(u)
            coeffs = [(lay.x(t), -prob.lower.c[k, t]) for t in range(m)]
            coeffs += [(lay.y(t), -a_u[t]) for t in range(n)]
            add(_linear(coeffs, con.b(u), N), "lower-extreme")

    # (3) mu_0 >= 0 and (4) mu_k >= 0
    add(Polynomial.variable(lay.mu0, N), "mu0-sign")
    for k in range(1, q + 1):
        add(Polynomial.variable(lay.mu(k), N), "muk-sign")

    # (5) dual slack: -mu_0 d0'y - sum_k (mu_k b_k^0 - mu_k c_k'x + sum_i mu_k^i b_k^i)
    terms = {}

    def bump(mono: Monomial, c: float):
        if c != 0.0:
            terms[mono] = terms.get(mono, 0.0) + c

    for t in range(n):
        bump(Monomial(((lay.mu0, 1), (lay.y(t), 1))), -float(prob.lower.d0[t]))
    for k, con in enumerate(prob.lower.constraints):
        bump(Monomial(((lay.mu(k + 1), 1),)), -float(con.b_coeffs[0]))
        for t in range(m):
            bump(Monomial(((lay.mu(k + 1), 1), (lay.x(t), 1))), float(prob.lower.c[k, t]))
        for i in range(1, s + 1):
            bump(Monomial(((lay.mu_i(k + 1, i), 1),)), -float(con.b_coeffs[i]))
    add(Polynomial(terms, N), "dual-slack")

    # (6) box-dual rows: (gamma_i mu_k)^2 - (mu_k^i)^2 >= 0
    for k, con in enumerate(prob.lower.constraints):
        gamma = con.set.gamma
        for i in range(1, s + 1):
            p = {Monomial(((lay.mu(k + 1), 2),)): float(gamma[i - 1]) ** 2,
                 Monomial(((lay.mu_i(k + 1, i), 2),)): -1.0}
            add(Polynomial(p, N), "dual-box")

    hs: list[Polynomial] = []
    # h_1..h_n: stationarity mu_0 d0^j + sum_k (mu_k a_k^{0j} + sum_i mu_k^i a_k^{ij})
    for t in range(n):
        terms = {}
        d = float(prob.lower.d0[t])
        if d != 0.0:
            terms[Monomial(((lay.mu0, 1),))] = d
        for k, con in enumerate(prob.lower.constraints):
            c0 = float(con.a_coeffs[0][t])
            if c0 != 0.0:
                terms[Monomial(((lay.mu(k + 1), 1),))] = \
                    terms.get(Monomial(((lay.mu(k + 1), 1),)), 0.0) + c0
            for i in range(1, s + 1):
                ci = float(con.a_coeffs[i][t])
                if ci != 0.0:
                    mono = Monomial(((lay.mu_i(k + 1, i), 1),))
                    terms[mono] = terms.get(mono, 0.0) + ci
        hs.append(Polynomial(terms, N))
    # h_{n+1}: 1 - sum mu^2
    terms = {Monomial(()): 1.0}
    for idx in lay.mu_indices():
        terms[Monomial(((idx, 2),))] = -1.0
    hs.append(Polynomial(terms, N))

    if prune != "none":
        kept_g, kept_tags = [], []
        for p, tag in zip(gs, tags):
            if not p.terms:
                continue
            if prune == "scalar" and any(_is_positive_multiple(p, e) for e in kept_g):
                continue
            kept_g.append(p)
            kept_tags.append(tag)
        gs, tags = kept_g, kept_tags

    return SingleLevelProgram(lay, tuple(gs), tuple(hs), tuple(tags))


def mu_from_multipliers(lam0: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Normalize lower-level dual multipliers to the mu vector of the
    reformulation: mu = (1, lam0, lam) / ||(1, lam0, lam)||, ordered
    (mu_0, mu_1..mu_q, mu_1^1..mu_q^1, ..., mu_1^s..mu_q^s)."""
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    denom = float(np.sqrt(1.0 + lam0 @ lam0 + (lam * lam).sum()))
    mu = [1.0 / denom] + [v / denom for v in lam0]
    for i in range(lam.shape[1]):
        mu.extend(lam[:, i] / denom)
    return np.array(mu)


def robust_feasible(prob: BilevelProblem, x, y,
                    tol: float = FEAS_TOL) -> tuple[bool, np.ndarray | None]:
    """Decide robust feasibility of (x, y) for the box problem: all upper
    extreme-point inequalities hold and the lower-level dual LP is feasible.
    Returns the normalized mu witness (mu_0 > 0 holds by construction)."""
    if not prob.is_box:
        raise TypeError("robust_feasible covers the box path; see ball_robust_feasible")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    for up in prob.upper:
        if up.worst_violation(x, y) > tol:
            return False, None
    from .lowerlevel import robust_feasible_point
    if not robust_feasible_point(prob.lower, x, y, tol=tol):
        return False, None
    cert = _box_dual_lp(prob.lower, x, y)
    if cert is None:
        return False, None
    mu = mu_from_multipliers(cert.lam0, cert.lam)
    if mu[0] <= MU0_THRESHOLD:
        return False, None
    return True, mu


def ball_robust_feasible(prob: BilevelProblem, x, y,
                         tol: float = FEAS_TOL):
    """Robust feasibility for the all-ball problem: one conic system with
    per-constraint S-lemma LMI blocks (upper in x, lower in y), the
    stationarity equalities, the dual slack row, and second-order-cone rows
    (lam0_j, lam_j).  Returns (bool, multiplier dict or None)."""
    if prob.is_box:
        raise TypeError("ball_robust_feasible requires ball uncertainty")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lower = prob.lower
    q = lower.q
    shifts = lower.shifts(x)

    prog = ConicProgram()
    # upper S-lemma blocks: scalar multiplier + LMI in x
    lam_up = prog.add_slice("nonneg", max(prob.l, 1))
    for i, con in enumerate(prob.upper):
        st = con.s
        P = prog.add_slice("psd", dim=st + 1)
        M0 = _slemma_block(con, x, 0.0, 0.0)
        M1 = np.diag(np.concatenate([np.ones(st), [-1.0]]))
        v0, v1 = svec(M0), svec(M1)
        for row in range(len(v0)):
            prog.add_equality([(P.start + row, 1.0), (lam_up.start + i, -float(v1[row]))],
                              float(v0[row]))

    # lower blocks (S-lemma in y, SOC multipliers, stationarity, dual slack)
    socs = [prog.add_slice("soc", con.s + 1) for con in lower.constraints]
    tau = prog.add_slice("free", 1)
    prog.set_objective(tau.start, -1.0)
    cap = prog.add_slice("nonneg", 1)
    prog.add_equality([(tau.start, 1.0), (cap.start, 1.0)], 1.0)

    slem = prog.add_slice("nonneg", q)
    for j, con in enumerate(lower.constraints):
        st = con.s
        P = prog.add_slice("psd", dim=st + 1)
        M0 = _slemma_block(con, y, float(shifts[j]), 0.0)
        M1 = np.diag(np.concatenate([np.ones(st), [-1.0]]))
        v0, v1 = svec(M0), svec(M1)
        for row in range(len(v0)):
            prog.add_equality([(P.start + row, 1.0), (slem.start + j, -float(v1[row]))],
                              float(v0[row]))

    for t in range(lower.n):
        entries = []
        for j, con in enumerate(lower.constraints):
            entries.append((socs[j].start, float(con.a_coeffs[0][t])))
            for i in range(con.s):
                entries.append((socs[j].start + 1 + i, float(con.a_coeffs[i + 1][t])))
        prog.add_equality(entries, -float(lower.d0[t]))

    entries = [(tau.start, 1.0)]
    for j, con in enumerate(lower.constraints):
        entries.append((socs[j].start, float(con.b_coeffs[0]) - float(shifts[j])))
        for i in range(con.s):
            entries.append((socs[j].start + 1 + i, float(con.b_coeffs[i + 1])))
    sl = prog.add_slice("nonneg", 1)
    entries.append((sl.start, 1.0))
    prog.add_equality(entries, -float(lower.d0 @ y))

    from .farkas import MULTIPLIER_BOUND
    for j in range(q):
        s3 = prog.add_slice("nonneg", 1)
        prog.add_equality([(socs[j].start, 1.0), (s3.start, 1.0)], MULTIPLIER_BOUND)

    sol = prog.solve()
    if sol.status == "infeasible":
        return False, None
    if sol.status != "optimal":
        raise IndeterminateError(f"ball feasibility solve failed: {sol.status}")
    if sol.primal[tau.start] < -tol:
        return False, None
    out = {
        "lam_upper": np.maximum(sol.primal[lam_up.start:lam_up.start + prob.l], 0.0),
        "lam_slemma": np.maximum(sol.primal[slem.start:slem.start + q], 0.0),
        "lam0": np.array([max(sol.primal[socs[j].start], 0.0) for j in range(q)]),
        "lam": np.array([[sol.primal[socs[j].start + 1 + i]
                          for i in range(lower.constraints[j].s)] for j in range(q)]),
    }
    return True, out


def hessian_positive_definite(f: Polynomial, point, tol: float = 1e-9) -> bool:
    """Coercivity helper: check positive-definiteness of the exact polynomial
    Hessian of f at the given point.  For a *convex* polynomial this is a
    sufficient coercivity criterion; for nonconvex f it is only a local
    statement and coercivity remains a user assertion."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    nv = f.nvars
    H = np.zeros((nv, nv))
    for a in range(nv):
        da = f.diff(a)
        for b in range(a, nv):
            H[a, b] = H[b, a] = da.diff(b)(point)
    return bool(np.linalg.eigvalsh(H).min() > tol)


# ---------------------------------------------------------------------------
# problem-file (JSON) round trip

def problem_to_dict(prob: BilevelProblem) -> dict:
    lower = prob.lower
    uset = lower.constraints[0].set
    if isinstance(uset, BoxSet):
        uncertainty = {"kind": "box", "lo": uset.lo.tolist(), "hi": uset.hi.tolist()}
    elif isinstance(uset, BallSet):
        uncertainty = {"kind": "ball", "dim": uset.s}
    else:
        raise TypeError("only box/ball problems serialize")
    upper = []
    for up in prob.upper:
        if isinstance(up, BoxUpperConstraint):
            upper.append({"a_lo": up.a_lo.tolist(), "a_hi": up.a_hi.tolist(),
                          "b_lo": up.b_lo.tolist(), "b_hi": up.b_hi.tolist(),
                          "c_lo": up.c_lo, "c_hi": up.c_hi})
        else:
            upper.append({"a_coeffs": up.a_coeffs.tolist(),
                          "b_coeffs": up.b_coeffs.tolist()})
    out = {
        "objective": prob.f.to_records(),
        "m": prob.m,
        "n": prob.n,
        "upper": upper,
        "lower": {
            "c0": lower.c0.tolist(),
            "d0": lower.d0.tolist(),
            "c": lower.c.tolist(),
            "a_coeffs": [con.a_coeffs.tolist() for con in lower.constraints],
            "b_coeffs": [con.b_coeffs.tolist() for con in lower.constraints],
            "uncertainty": uncertainty,
        },
        "assert_coercive": bool(prob.assert_coercive),
    }
    if prob.feasible_point is not None:
        out["feasible_point"] = list(prob.feasible_point)
    if prob.kappa is not None:
        out["kappa"] = float(prob.kappa)
    return out


def _uncertainty_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "box":
        if "gamma" in d:
            return BoxSet.symmetric(np.asarray(d["gamma"], dtype=float))
        return BoxSet(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))
    if kind == "ball":
        return BallSet(int(d["dim"]))
    if kind == "spectrahedron":
        return Spectrahedron(np.asarray(d["matrices"], dtype=float))
    raise ValueError(f"unknown uncertainty kind {kind!r}")


def problem_from_dict(data: dict) -> BilevelProblem:
    m, n = int(data["m"]), int(data["n"])
    f = Polynomial.from_records(data["objective"], m + n)
    uset = _uncertainty_from_dict(data["lower"]["uncertainty"])
    cons = tuple(
        AffineUncertainConstraint(np.asarray(a, dtype=float),
                                  np.asarray(b, dtype=float), uset)
        for a, b in zip(data["lower"]["a_coeffs"], data["lower"]["b_coeffs"]))
    lower = LowerLevelProblem(
        c0=np.asarray(data["lower"]["c0"], dtype=float),
        d0=np.asarray(data["lower"]["d0"], dtype=float),
        c=np.asarray(data["lower"]["c"], dtype=float),
        constraints=cons)
    upper = []
    for u in data.get("upper", []):
        if "a_lo" in u:
            upper.append(BoxUpperConstraint(u["a_lo"], u["a_hi"], u["b_lo"],
                                            u["b_hi"], u["c_lo"], u["c_hi"]))
        else:
            st = len(u["b_coeffs"]) - 1
            upper.append(AffineUncertainConstraint(
                np.asarray(u["a_coeffs"], dtype=float),
                np.asarray(u["b_coeffs"], dtype=float), BallSet(st)))
    return BilevelProblem(
        f=f, m=m, n=n, upper=tuple(upper), lower=lower,
        assert_coercive=bool(data.get("assert_coercive", False)),
        feasible_point=tuple(data["feasible_point"]) if "feasible_point" in data else None,
        kappa=float(data["kappa"]) if data.get("kappa") is not None else None)


def load_problem(path) -> BilevelProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def save_problem(prob: BilevelProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(prob), fh, indent=2)
        fh.write("\n")
