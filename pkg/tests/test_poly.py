import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mavem.poly import (MonomialBasis, SingularGramError, dim_poly, edge_gram, edge_quadrature,
                        is_convex, l2_project_element, monomial_exponents, polygon_area_centroid,
                        polygon_quadrature, solve_gram, triangle_rule)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def square_moment(a, b):
    # int over the unit square of x^a y^b
    return 1.0 / ((a + 1) * (b + 1))


def test_dim_and_ordering():
    assert [dim_poly(k) for k in range(-1, 4)] == [0, 1, 3, 6, 10]
    assert monomial_exponents(2).tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    # lower-degree basis is a prefix
    assert np.array_equal(monomial_exponents(4)[:dim_poly(3)], monomial_exponents(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10), st.integers(0, 10))
def test_square_quadrature_exact(a, b):
    deg = a + b
    rule = polygon_quadrature(UNIT_SQUARE, deg)
    val = rule.integrate(rule.points[:, 0] ** a * rule.points[:, 1] ** b)
    assert val == pytest.approx(square_moment(a, b), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 9), st.integers(0, 9))
def test_triangle_rule_exact(a, b):
    from math import factorial
    pts, w = triangle_rule(a + b)
    exact = factorial(a) * factorial(b) / factorial(a + b + 2)
    assert np.dot(w, pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_edge_quadrature_and_gram():
    rule, xi = edge_quadrature([0.0, 0.0], [2.0, 0.0], 5)
    assert rule.integrate(rule.points[:, 0] ** 5) == pytest.approx(2.0**6 / 6, rel=1e-13)
    assert xi[0] < 0 < xi[-1]
    g = edge_gram(2, 2)
    assert g[0, 0] == 1.0 and g[0, 1] == 0.0 and g[1, 1] == pytest.approx(1 / 3)


def test_derivative_matrices_match_gradients():
    basis = MonomialBasis(np.array([0.3, 0.2]), 0.7, 4)
    dx, dy = basis.derivative_matrices()
    pts = np.random.default_rng(1).uniform(size=(9, 2))
    c = np.random.default_rng(2).standard_normal(basis.dim)
    low = MonomialBasis(basis.center, basis.h, 3)
    g = basis.gradients(pts)
    assert np.allclose(low.values(pts) @ (dx @ c), g[0] @ c)
    assert np.allclose(low.values(pts) @ (dy @ c), g[1] @ c)


def test_area_centroid_and_convexity():
    area, c = polygon_area_centroid(UNIT_SQUARE)
    assert area == pytest.approx(1.0) and np.allclose(c, 0.5)
    assert is_convex(UNIT_SQUARE)
    dart = np.array([[0, 0], [2, 1], [0, 2], [1, 1.0]])
    assert not is_convex(dart)
    with pytest.raises(ValueError):
        polygon_quadrature(dart, 2)


def test_l2_projection_reproduces_polynomials():
    hexagon = np.array([[np.cos(t), np.sin(t)] for t in np.linspace(0, 2 * np.pi, 7)[:-1]])
    f = lambda p: 1 + p[:, 0] - 2 * p[:, 0] * p[:, 1] + p[:, 1] ** 3
    c = l2_project_element(f, hexagon, 3)
    _, cen = polygon_area_centroid(hexagon)
    basis = MonomialBasis(cen, 2.0, 3)
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, size=(5, 2))
    assert np.allclose(basis.values(pts) @ c, f(pts), atol=1e-12)


def test_singular_gram_raises():
    with pytest.raises(SingularGramError):
        solve_gram(np.ones((2, 2)), np.ones(2))
