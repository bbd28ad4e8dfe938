import numpy as np
import pytest

from mavem.problems import PROBLEMS, exact_fields, manufactured, validate_derivatives


@pytest.mark.parametrize("name", PROBLEMS)
def test_derivatives_match_differences(name):
    validate_derivatives(name, n_points=100)


@pytest.mark.parametrize("name", PROBLEMS)
@pytest.mark.parametrize("eps", [1.0, 1e-2])
def test_data_consistency(name, eps):
    pb = manufactured(name, eps)
    u, grad, hess, lap, bilap = exact_fields(name)
    pts = np.random.default_rng(0).uniform(size=(100, 2))
    assert np.allclose(pb.f(pts), np.linalg.det(hess(pts)) - eps * bilap(pts), atol=1e-9)
    assert np.allclose(pb.psi(pts), np.trace(hess(pts), axis1=1, axis2=2), atol=1e-9)
    assert np.allclose(pb.g(pts), u(pts))


def test_vanishing_boundary_data():
    pb = manufactured("quadratic", 0.25, boundary="vanishing")
    pts = np.random.default_rng(1).uniform(size=(5, 2))
    assert np.allclose(pb.psi(pts), 0.25) and np.allclose(pb.f(pts), 4.0)


def test_quadratic_laplacian_is_four():
    assert np.allclose(exact_fields("quadratic")[3](np.zeros((3, 2))), 4.0)


def test_unknown_problem():
    with pytest.raises(ValueError):
        manufactured("p9", 0.1)
    with pytest.raises(ValueError):
        manufactured("p1", 0.1, boundary="other")
