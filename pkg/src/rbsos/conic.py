"""Standard-form conic programs and their solution.

A ConicProgram is

    minimize    c' v
    subject to  A v = b
                v restricted slice-by-slice to free / nonneg / second-order /
                PSD cones (PSD slices hold the scaled symmetric vectorization
                of a d x d matrix, length d(d+1)/2, off-diagonals times
                sqrt(2) so Euclidean inner products equal trace inner
                products).

Solving is delegated to cvxopt's conelp, which runs an extended self-dual
embedding and therefore reports certified infeasibility/unboundedness rays
rather than mere non-convergence.  The program is handed to conelp in its
dual form (one conelp variable per equality row): SOS-style programs here
have few equality rows and many cone variables, and conelp's per-iteration
cost scales with the cube of its variable count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers, spmatrix
from scipy.linalg import qr as scipy_qr

TOL_FEAS = 1e-8
TOL_GAP = 1e-8
MAX_ITERS = 100
RETRY_TOLS = (1e-7, 3e-6)

SQRT2 = math.sqrt(2.0)


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled symmetric vectorization: upper triangle row-wise, off-diagonal
    entries multiplied by sqrt(2)."""
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    out = np.empty(d * (d + 1) // 2)
    k = 0
    for i in range(d):
        out[k] = M[i, i]
        k += 1
        for j in range(i + 1, d):
            out[k] = SQRT2 * M[i, j]
            k += 1
    return out


def smat(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of svec."""
    M = np.zeros((d, d))
    k = 0
    for i in range(d):
        M[i, i] = v[k]
        k += 1
        for j in range(i + 1, d):
            M[i, j] = M[j, i] = v[k] / SQRT2
            k += 1
    return M


def svec_len(d: int) -> int:
    return d * (d + 1) // 2


def svec_dim(length: int) -> int:
    d = int(round((math.isqrt(8 * length + 1) - 1) / 2))
    if svec_len(d) != length:
        raise ValueError(f"{length} is not a triangular number")
    return d


def psd_check(M: np.ndarray, tol: float = 1e-8) -> bool:
    """True iff lambda_min(M) >= -tol * (1 + ||M||_2).  M must be symmetric
    to within 1e-10 (relative)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = 1.0 + np.max(np.abs(M)) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise ValueError("matrix not symmetric")
    if M.size == 0:
        return True
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    norm = max(abs(w[0]), abs(w[-1]))
    return w[0] >= -tol * (1.0 + norm)


@dataclass(frozen=True)
class ConeSlice:
    kind: str          # "free" | "nonneg" | "soc" | "psd"
    start: int
    length: int
    dim: int = 0       # matrix dimension for psd slices

    def __post_init__(self):
        if self.kind not in ("free", "nonneg", "soc", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.kind == "psd" and svec_len(self.dim) != self.length:
            raise ValueError("psd slice length must be dim*(dim+1)/2")


class ConicProgram:
    """Incrementally assembled conic program.  Variables are appended as cone
    slices; equality rows as sparse coefficient lists."""

    def __init__(self):
        self.slices: list[ConeSlice] = []
        self.nvars = 0
        self._obj: dict[int, float] = {}
        self._rows: list[list[tuple[int, float]]] = []
        self._rhs: list[float] = []

    # ---- construction ---------------------------------------------------

    def add_slice(self, kind: str, length: int | None = None, dim: int | None = None) -> ConeSlice:
        if kind == "psd":
            if dim is None:
                raise ValueError("psd slice needs dim")
            length = svec_len(dim)
        elif length is None:
            raise ValueError("slice needs length")
        sl = ConeSlice(kind, self.nvars, length, dim or 0)
        self.slices.append(sl)
        self.nvars += length
        return sl

    def set_objective(self, idx: int, coeff: float):
        """Objective is minimized; accumulate coefficient on variable idx."""
        self._obj[idx] = self._obj.get(idx, 0.0) + coeff

    def add_equality(self, entries: list[tuple[int, float]], rhs: float):
        self._rows.append([(i, float(v)) for i, v in entries if v != 0.0])
        self._rhs.append(float(rhs))

    @property
    def n_eq(self) -> int:
        return len(self._rows)

    def c_vector(self) -> np.ndarray:
        c = np.zeros(self.nvars)
        for i, v in self._obj.items():
            c[i] = v
        return c

    def dump(self, path: str):
        """Sparse text dump: header lines then one line per nonzero
        (section, row, col, value) for cross-checking externally."""
        with open(path, "w") as fh:
            fh.write(f"# conic program: {self.nvars} vars, {self.n_eq} equalities\n")
            for k, sl in enumerate(self.slices):
                fh.write(f"slice {k} {sl.kind} {sl.start} {sl.length} {sl.dim}\n")
            for i, v in sorted(self._obj.items()):
                fh.write(f"obj 0 {i} {v!r}\n")
            for r, (row, rhs) in enumerate(zip(self._rows, self._rhs)):
                for i, v in row:
                    fh.write(f"eq {r} {i} {v!r}\n")
                fh.write(f"rhs {r} 0 {rhs!r}\n")

    # ---- solve ------------------------------------------------------------

    def validate(self):
        covered = sum(sl.length for sl in self.slices)
        if covered != self.nvars:
            raise ValueError("cone slices do not partition the variables")

    def solve(self, options: dict | None = None) -> "ConicSolution":
        """Solve at the default tolerances; on a numerical failure retry with
        progressively relaxed tolerances (large SOS programs often stall a
        hair short of 1e-8 while being accurate to ~1e-7)."""
        opts = dict(options or {})
        sol = _solve_via_conelp(self, opts)
        if sol.status != "numerical-failure" or any(
                k in opts for k in ("feastol", "abstol", "reltol")):
            return sol
        for tol in RETRY_TOLS:
            relaxed = {"feastol": tol, "abstol": tol, "reltol": tol}
            relaxed.update(opts)
            sol = _solve_via_conelp(self, relaxed)
            if sol.status != "numerical-failure":
                return sol
        return sol


@dataclass
class ConicSolution:
    status: str                      # optimal | infeasible | unbounded | numerical-failure
    primal: np.ndarray | None = None
    dual: np.ndarray | None = None   # multipliers on the equality rows
    objective: float = math.nan
    residual_primal: float = math.nan
    residual_dual: float = math.nan
    residual_gap: float = math.nan
    certificate: np.ndarray | None = None  # improving ray (dual, on eq rows) when infeasible
    raw_status: str = ""

    def slice_value(self, sl: ConeSlice) -> np.ndarray:
        return self.primal[sl.start:sl.start + sl.length]

    def slice_matrix(self, sl: ConeSlice) -> np.ndarray:
        if sl.kind != "psd":
            raise ValueError("not a psd slice")
        return smat(self.slice_value(sl), sl.dim)


def _solve_via_conelp(prog: ConicProgram, options: dict) -> ConicSolution:
    prog.validate()
    p = prog.n_eq
    c = prog.c_vector()

    cone_order = [sl for sl in prog.slices if sl.kind == "nonneg"]
    cone_order += [sl for sl in prog.slices if sl.kind == "soc"]
    cone_order += [sl for sl in prog.slices if sl.kind == "psd"]
    free_slices = [sl for sl in prog.slices if sl.kind == "free"]
    if not cone_order:
        raise ValueError("program has no cone constraints; conelp requires at least one")

    # column-sparse view of A' (rows of A indexed by equality, cols by variable)
    col_entries: dict[int, list[tuple[int, float]]] = {}
    for r, row in enumerate(prog._rows):
        for i, v in row:
            col_entries.setdefault(i, []).append((r, v))

    # dual form for conelp: variable y in R^p,
    #   minimize -b'y   s.t.  slack_C = c_C - (A'y)_C in cone,  (A'y)_F = c_F
    dims = {"l": 0, "q": [], "s": []}
    G_i: list[int] = []
    G_j: list[int] = []
    G_v: list[float] = []
    h_list: list[float] = []
    grow = 0
    # map from conic-variable index -> (position in conelp slack, expansion rows)
    recover: list[tuple[ConeSlice, int]] = []  # (slice, conelp slack offset)

    for sl in cone_order:
        recover.append((sl, grow))
        if sl.kind == "nonneg":
            dims["l"] += sl.length
            for t in range(sl.length):
                var = sl.start + t
                h_list.append(c[var])
                for r, v in col_entries.get(var, ()):  # G row: +(A')
                    G_i.append(grow + t)
                    G_j.append(r)
                    G_v.append(v)
            grow += sl.length
        elif sl.kind == "soc":
            dims["q"].append(sl.length)
            for t in range(sl.length):
                var = sl.start + t
                h_list.append(c[var])
                for r, v in col_entries.get(var, ()):
                    G_i.append(grow + t)
                    G_j.append(r)
                    G_v.append(v)
            grow += sl.length
        else:  # psd: expand svec components into full d*d column-major storage
            d = sl.dim
            dims["s"].append(d)
            h_full = np.zeros(d * d)
            k = 0
            for i in range(d):
                for j in range(i, d):
                    var = sl.start + k
                    if i == j:
                        targets = ((i * d + i, 1.0),)
                    else:
                        targets = ((j * d + i, 1.0 / SQRT2), (i * d + j, 1.0 / SQRT2))
                    for pos, w in targets:
                        h_full[pos] += w * c[var]
                        for r, v in col_entries.get(var, ()):
                            G_i.append(grow + pos)
                            G_j.append(r)
                            G_v.append(w * v)
                    k += 1
            h_list.extend(h_full.tolist())
            grow += d * d

    # equality block: (A'y)_F = c_F
    A_i: list[int] = []
    A_j: list[int] = []
    A_v: list[float] = []
    b_list: list[float] = []
    erow = 0
    free_offsets: list[tuple[ConeSlice, int]] = []
    for sl in free_slices:
        free_offsets.append((sl, erow))
        for t in range(sl.length):
            var = sl.start + t
            b_list.append(c[var])
            for r, v in col_entries.get(var, ()):
                A_i.append(erow)
                A_j.append(r)
                A_v.append(v)
            erow += 1

    b_vec = np.zeros(p)
    for r, rhs in enumerate(prog._rhs):
        b_vec[r] = rhs

    # The free-variable rows of the equality block can be linearly dependent
    # (e.g. syzygies among equality-multiplier coefficient vectors in SOS
    # programs), which makes conelp's KKT system exactly singular.  Drop
    # dependent rows after checking their right-hand sides are consistent;
    # the dropped free components are reconstructed after the solve from the
    # original equality rows.
    A_dense = np.zeros((erow, p))
    for i, j, v in zip(A_i, A_j, A_v):
        A_dense[i, j] += v
    b_free = np.array(b_list)
    if erow:
        _, R, piv = scipy_qr(A_dense.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank_tol = (diag[0] if diag.size else 0.0) * max(A_dense.shape) * np.finfo(float).eps
        rank = int(np.count_nonzero(diag > rank_tol))
    else:
        rank = 0
    keep_rows = np.sort(piv[:rank]) if erow else np.arange(0)
    drop_rows = np.setdiff1d(np.arange(erow), keep_rows)
    if drop_rows.size:
        lam, *_ = np.linalg.lstsq(A_dense[keep_rows].T, A_dense[drop_rows].T, rcond=None)
        mismatch = np.abs(b_free[drop_rows] - lam.T @ b_free[keep_rows])
        if mismatch.size and mismatch.max() > 1e-8 * (1.0 + np.abs(b_free).max()):
            return ConicSolution(status="numerical-failure",
                                 raw_status="inconsistent dependent free-variable rows")

    c_lp = matrix(-b_vec)
    G = spmatrix(G_v, G_i, G_j, (grow, p))
    h = matrix(np.array(h_list))
    A = matrix(A_dense[keep_rows]) if erow else spmatrix([], [], [], (0, p))
    b = matrix(b_free[keep_rows]) if erow else matrix(np.zeros(0))

    opts = {"show_progress": False, "maxiters": MAX_ITERS,
            "abstol": TOL_GAP, "reltol": TOL_GAP, "feastol": TOL_FEAS}
    opts.update(options)
    saved = dict(solvers.options)
    solvers.options.update(opts)
    try:
        sol = solvers.conelp(c_lp, G, h, dims, A, b)
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        return ConicSolution(status="numerical-failure", raw_status=f"conelp raised: {exc}")
    finally:
        solvers.options.clear()
        solvers.options.update(saved)

    raw = sol["status"]

    free_vars = np.zeros(erow, dtype=int)
    for sl, off in free_offsets:
        free_vars[off:off + sl.length] = np.arange(sl.start, sl.start + sl.length)

    def recover_primal(zkey: str, ykey: str) -> np.ndarray:
        v = np.zeros(prog.nvars)
        z = np.array(sol[zkey]).ravel() if sol[zkey] is not None else None
        yf = np.array(sol[ykey]).ravel() if sol[ykey] is not None else None
        if z is not None:
            for sl, off in recover:
                if sl.kind == "psd":
                    d = sl.dim
                    Z = z[off:off + d * d].reshape(d, d, order="F")
                    v[sl.start:sl.start + sl.length] = svec(0.5 * (Z + Z.T))
                else:
                    v[sl.start:sl.start + sl.length] = z[off:off + sl.length]
        if yf is not None:
            yfull = np.zeros(erow)
            yfull[keep_rows] = yf
            for sl, off in free_offsets:
                v[sl.start:sl.start + sl.length] = yfull[off:off + sl.length]
            if drop_rows.size:
                # complete the dropped free components: least-squares fit of
                # the original equality residual onto their columns
                dropped = free_vars[drop_rows]
                col = {int(i): t for t, i in enumerate(dropped)}
                res = np.array(prog._rhs, dtype=float)
                D = np.zeros((p, dropped.size))
                for r, row in enumerate(prog._rows):
                    for i, w in row:
                        if i in col:
                            D[r, col[i]] += w
                        else:
                            res[r] -= w * v[i]
                fill, *_ = np.linalg.lstsq(D, res, rcond=None)
                v[dropped] = fill
        return v

    if raw == "optimal":
        primal = recover_primal("z", "y")
        dual = np.array(sol["x"]).ravel()
        return ConicSolution(
            status="optimal",
            primal=primal,
            dual=dual,
            objective=float(c @ primal),
            residual_primal=float(sol["dual infeasibility"] or 0.0),
            residual_dual=float(sol["primal infeasibility"] or 0.0),
            residual_gap=float(sol["gap"] or 0.0),
            raw_status=raw,
        )
    if raw == "dual infeasible":
        # improving ray for the conelp dual == Farkas certificate that the
        # original primal program is infeasible
        ray = np.array(sol["x"]).ravel() if sol["x"] is not None else None
        return ConicSolution(status="infeasible", certificate=ray, raw_status=raw)
    if raw == "primal infeasible":
        primal_ray = recover_primal("z", "y")
        return ConicSolution(status="unbounded", primal=primal_ray, raw_status=raw)
    return ConicSolution(status="numerical-failure", raw_status=raw)
