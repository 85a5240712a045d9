import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbsos.poly import (Monomial, Polynomial, VariableLayout, gram_expand,
                        monomial_basis)


def P(terms, nvars):
    return Polynomial({Monomial(dict(enumerate(e))): c for e, c in terms}, nvars)


@st.composite
def polynomials(draw, nvars=3, max_deg=4, max_terms=6):
    terms = draw(st.lists(
        st.tuples(
            st.lists(st.integers(0, max_deg), min_size=nvars, max_size=nvars),
            st.floats(-10, 10, allow_nan=False)),
        min_size=0, max_size=max_terms))
    return P([(tuple(e), c) for e, c in terms], nvars)


def test_monomial_constructors_agree():
    a = Monomial({0: 2, 3: 1})
    b = Monomial([(3, 1), (0, 2)])
    assert a == b
    assert a.degree == 3
    assert Monomial({}).degree == 0


def test_monomial_drops_zero_exponents():
    assert Monomial({0: 2, 1: 0}) == Monomial({0: 2})


def test_grlex_orders_by_degree_then_lex():
    basis = monomial_basis(2, 2)
    degs = [m.degree for m in basis]
    assert degs == sorted(degs)
    assert basis[0] == Monomial({})
    assert len(basis) == math.comb(2 + 2, 2)


@pytest.mark.parametrize("n,k", [(1, 5), (3, 3), (5, 2)])
def test_monomial_basis_count(n, k):
    assert len(monomial_basis(n, k)) == math.comb(n + k, k)


def test_polynomial_evaluation():
    f = P([((2, 0), 1.0), ((1, 1), -4.0), ((0, 2), 1.0)], 2)
    pt = np.array([2.0, 3.0])
    assert f(pt) == pytest.approx(4 - 24 + 9)


def test_diff_matches_numeric_gradient():
    f = P([((4, 0), 1.0), ((1, 1), -4.0), ((0, 4), 1.0), ((0, 0), -2.0)], 2)
    pt = np.array([0.7, -1.3])
    eps = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = eps
        num = (f(pt + e) - f(pt - e)) / (2 * eps)
        assert f.diff(i)(pt) == pytest.approx(num, abs=1e-5)


def test_embed_preserves_values():
    f = P([((2, 1), 3.0)], 2)
    g = f.embed(5)
    assert g.nvars == 5
    assert g(np.array([2.0, 1.0, 9.0, 9.0, 9.0])) == f(np.array([2.0, 1.0]))


def test_records_round_trip():
    f = P([((2, 0), 1.0), ((0, 1), -0.5)], 2)
    assert Polynomial.from_records(f.to_records(), 2) == f


@given(polynomials(), polynomials(), st.lists(st.floats(-3, 3, allow_nan=False),
                                              min_size=3, max_size=3))
@settings(max_examples=50, deadline=None)
def test_product_evaluates_pointwise(f, g, pt):
    pt = np.asarray(pt)
    assert (f * g)(pt) == pytest.approx(f(pt) * g(pt), rel=1e-9, abs=1e-6)


@given(polynomials(), polynomials(), st.lists(st.floats(-3, 3, allow_nan=False),
                                              min_size=3, max_size=3))
@settings(max_examples=50, deadline=None)
def test_sum_evaluates_pointwise(f, g, pt):
    pt = np.asarray(pt)
    assert (f + g)(pt) == pytest.approx(f(pt) + g(pt), rel=1e-9, abs=1e-9)


@given(polynomials())
@settings(max_examples=50, deadline=None)
def test_diff_of_product_rule(f):
    g = P([((1, 0, 0), 1.0), ((0, 0, 2), 0.5)], 3)
    lhs = (f * g).diff(0)
    rhs = f.diff(0) * g + f * g.diff(0)
    assert (lhs - rhs).coeff_norm() <= 1e-9 * (1 + f.coeff_norm())


def test_gram_expand_matches_quadratic_form():
    basis = monomial_basis(2, 1)          # [1, x, y]
    G = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, -1.0], [0.0, -1.0, 3.0]])
    p = gram_expand(basis, G, 2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        pt = rng.normal(size=2)
        v = np.array([np.prod([pt[i] ** pw for i, pw in m.pairs]) for m in basis])
        assert p(pt) == pytest.approx(v @ G @ v)


def test_variable_layout_indices():
    lay = VariableLayout(m=2, n=1, q=2, s=2)
    assert lay.nvars == 2 + 1 + 2 * (2 + 1) + 1
    ids = {lay.x(0), lay.x(1), lay.y(0), lay.mu0,
           lay.mu(1), lay.mu(2),
           lay.mu_i(1, 1), lay.mu_i(1, 2), lay.mu_i(2, 1), lay.mu_i(2, 2)}
    assert ids == set(range(lay.nvars))
    assert set(lay.mu_indices()) == ids - {lay.x(0), lay.x(1), lay.y(0)}
