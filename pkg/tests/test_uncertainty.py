import numpy as np
import pytest

from rbsos.uncertainty import (AffineUncertainConstraint, BallSet, BoxSet,
                               Spectrahedron, ball_to_spectrahedron,
                               box_extreme_points, box_to_spectrahedron,
                               closedness_sufficient, max_affine_over_set,
                               slater_check)


def test_box_extreme_points_count_and_membership():
    lo = np.array([-1.0, 0.0])
    hi = np.array([2.0, 0.5])
    pts = box_extreme_points(np.stack([lo, hi], axis=1))
    assert len(pts) == 4
    box = BoxSet(lo, hi)
    for u in pts:
        assert box.contains(u)


def test_box_to_spectrahedron_agrees_with_interval_test():
    gamma = np.array([0.5, 2.0])
    spec = box_to_spectrahedron(gamma)
    rng = np.random.default_rng(11)
    for _ in range(500):
        u = rng.uniform(-2 * gamma, 2 * gamma)
        assert spec.contains(u, tol=1e-9) == bool(np.all(np.abs(u) <= gamma + 1e-9))


def test_ball_to_spectrahedron_agrees_with_norm_test():
    spec = ball_to_spectrahedron(3)
    rng = np.random.default_rng(12)
    for _ in range(500):
        u = rng.normal(size=3)
        if rng.random() < 0.5:
            u /= np.linalg.norm(u)          # exercise the boundary too
        assert spec.contains(u, tol=1e-9) == bool(np.linalg.norm(u) <= 1 + 1e-9)


def test_max_affine_over_box_matches_corner_enumeration():
    rng = np.random.default_rng(13)
    box = BoxSet(np.array([-1.0, -0.5]), np.array([0.3, 2.0]))
    corners = box.extreme_points()
    for _ in range(20):
        c0 = float(rng.normal())
        cvec = rng.normal(size=2)
        brute = max(c0 + cvec @ u for u in corners)
        assert max_affine_over_set(c0, cvec, box) == pytest.approx(brute, abs=1e-9)


def test_max_affine_over_ball_is_norm():
    cvec = np.array([3.0, 4.0])
    assert max_affine_over_set(1.0, cvec, BallSet(2)) == pytest.approx(6.0, abs=1e-7)


def test_max_affine_over_spectrahedron_disk():
    # The disk pencil I + u1*E13 + u2*E23 >= 0 encodes u1^2 + u2^2 <= 1.
    A0 = np.eye(3)
    A1 = np.zeros((3, 3)); A1[0, 2] = A1[2, 0] = 1.0
    A2 = np.zeros((3, 3)); A2[1, 2] = A2[2, 1] = 1.0
    disk = Spectrahedron((A0, A1, A2))
    assert max_affine_over_set(0.0, np.array([3.0, 4.0]), disk) == pytest.approx(
        5.0, abs=1e-6)


def _simple_constraint(a0, a1, gamma):
    return AffineUncertainConstraint(np.array([[a0], [a1]], float),
                                     np.array([0.0, 0.0]),
                                     BoxSet.symmetric(np.array([gamma])))


def test_slater_fails_when_coefficient_changes_sign():
    # (1 + u) z <= 0 with u in [-1, 1]: at u = -1 the row is 0 <= 0, never
    # strict, so no z works.
    ok, _ = slater_check([_simple_constraint(1.0, 1.0, 1.0)])
    assert not ok


def test_slater_holds_with_witness():
    ok, z = slater_check([_simple_constraint(1.0, 0.5, 1.0)])
    assert ok
    con = _simple_constraint(1.0, 0.5, 1.0)
    assert con.worst_case(z) < 0


def test_closedness_sufficient_labels():
    box_con = _simple_constraint(1.0, 0.5, 1.0)
    assert closedness_sufficient([box_con]) == "polytope"
    A0 = np.eye(3)
    A1 = np.zeros((3, 3)); A1[0, 2] = A1[2, 0] = 1.0
    A2 = np.zeros((3, 3)); A2[1, 2] = A2[2, 1] = 1.0
    disk_con = AffineUncertainConstraint(np.array([[0.0], [1.0], [0.0]]),
                                         np.zeros(3),
                                         Spectrahedron((A0, A1, A2)))
    assert closedness_sufficient([disk_con]) in ("slater", "unknown")


def test_constraint_worst_case_interval_arithmetic():
    con = _simple_constraint(1.0, 0.5, 1.0)
    # a(u) = 1 + 0.5 u so a(u) z - b ranges over [0.5 z, 1.5 z] for z >= 0.
    assert con.worst_case(np.array([2.0])) == pytest.approx(3.0)
    assert con.worst_case(np.array([-2.0])) == pytest.approx(-1.0)
