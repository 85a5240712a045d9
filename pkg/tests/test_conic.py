import numpy as np
import pytest

from rbsos.conic import ConicProgram, smat, svec, svec_dim, svec_len


def test_svec_round_trip():
    rng = np.random.default_rng(3)
    for d in (1, 2, 4, 7):
        M = rng.normal(size=(d, d))
        M = M + M.T
        v = svec(M)
        assert len(v) == svec_len(d)
        assert svec_dim(len(v)) == d
        np.testing.assert_allclose(smat(v, d), M, atol=1e-12)


def test_svec_preserves_inner_product():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(5, 5))
    A = A + A.T
    B = rng.normal(size=(5, 5))
    B = B + B.T
    assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))


def test_lp_with_nonneg_and_free_vars():
    # min x + y  s.t.  x - y = 1,  x >= 0,  y >= -2 (slack).  On the line
    # x = 1 + y >= 0 forces y >= -1, so the optimum is -1 at y = -1.
    prog = ConicProgram()
    x = prog.add_slice("nonneg", 1)
    y = prog.add_slice("free", 1)
    s = prog.add_slice("nonneg", 1)
    prog.set_objective(x.start, 1.0)
    prog.set_objective(y.start, 1.0)
    prog.add_equality([(x.start, 1.0), (y.start, -1.0)], 1.0)
    prog.add_equality([(y.start, 1.0), (s.start, -1.0)], -2.0)
    sol = prog.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-1.0, abs=1e-6)
    assert sol.primal[y.start] == pytest.approx(-1.0, abs=1e-6)


def test_sdp_minimum_eigenvalue():
    # max t s.t. C - t I >= 0 gives the smallest eigenvalue of C.
    C = np.array([[2.0, 1.0], [1.0, 3.0]])
    lam_min = np.linalg.eigvalsh(C)[0]
    prog = ConicProgram()
    t = prog.add_slice("free", 1)
    P = prog.add_slice("psd", dim=2)
    prog.set_objective(t.start, -1.0)
    vC = svec(C)
    vI = svec(np.eye(2))
    for row in range(len(vC)):
        prog.add_equality([(P.start + row, 1.0), (t.start, float(vI[row]))],
                          float(vC[row]))
    sol = prog.solve()
    assert sol.status == "optimal"
    assert sol.primal[t.start] == pytest.approx(lam_min, abs=1e-7)
    M = sol.slice_matrix(P)
    np.testing.assert_allclose(M, C - lam_min * np.eye(2), atol=1e-6)


def test_infeasible_detected_with_certificate():
    # x >= 0 with x = -1 is infeasible.
    prog = ConicProgram()
    x = prog.add_slice("nonneg", 1)
    prog.add_equality([(x.start, 1.0)], -1.0)
    sol = prog.solve()
    assert sol.status == "infeasible"
    assert sol.certificate is not None


def test_unbounded_detected():
    prog = ConicProgram()
    x = prog.add_slice("free", 1)
    y = prog.add_slice("nonneg", 1)
    prog.set_objective(x.start, 1.0)
    prog.add_equality([(x.start, 1.0), (y.start, 1.0)], 0.0)
    sol = prog.solve()
    assert sol.status == "unbounded"


def test_redundant_free_rows_are_dropped():
    # Duplicate the defining equalities of an eigenvalue SDP; the dual-form
    # free block becomes rank-deficient, which must not break the solve.
    C = np.array([[2.0, 1.0], [1.0, 3.0]])
    prog = ConicProgram()
    t = prog.add_slice("free", 1)
    u = prog.add_slice("free", 1)      # shadow copy constrained to equal t
    P = prog.add_slice("psd", dim=2)
    prog.set_objective(t.start, -0.5)
    prog.set_objective(u.start, -0.5)
    prog.add_equality([(t.start, 1.0), (u.start, -1.0)], 0.0)
    vC = svec(C)
    vI = svec(np.eye(2))
    for row in range(len(vC)):
        prog.add_equality([(P.start + row, 1.0),
                           (t.start, 0.5 * float(vI[row])),
                           (u.start, 0.5 * float(vI[row]))], float(vC[row]))
    sol = prog.solve()
    assert sol.status == "optimal"
    assert sol.primal[t.start] == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-6)


def test_dump_is_parseable(tmp_path):
    prog = ConicProgram()
    x = prog.add_slice("nonneg", 2)
    prog.set_objective(x.start, 1.0)
    prog.add_equality([(x.start, 1.0), (x.start + 1, 1.0)], 1.0)
    path = tmp_path / "prog.sdp"
    prog.dump(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# conic program: 2 vars")
    assert any(line.startswith("slice 0 nonneg") for line in lines)
    assert any(line.startswith("rhs 0") for line in lines)
