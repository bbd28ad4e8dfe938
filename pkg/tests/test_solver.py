import numpy as np
import pytest
from scipy.sparse import identity

from mavem.forms import Discretization, assemble_linearized, assemble_residual, assemble_rhs
from mavem.mesh import build_uniform_quad_mesh
from mavem.problems import manufactured
from mavem.solver import (SolverConfig, continuation_solve, fixed_point_step, newton_solve, solve,
                          solve_linear)
from mavem.space import interpolate


@pytest.fixture(scope="module")
def p1_setup():
    pb = manufactured("p1", 1e-2)
    disc = Discretization(build_uniform_quad_mesh(8), 2)
    return pb, disc


def test_solve_linear_identity():
    b = np.arange(5.0)
    assert np.array_equal(solve_linear(identity(5, format="csr"), b), b)


def test_solve_linear_singular():
    from scipy.sparse import csr_matrix
    with pytest.raises(np.linalg.LinAlgError):
        solve_linear(csr_matrix((3, 3)), np.ones(3))


def test_linear_solve_recovers_polynomial():
    # A_L with identity coefficient, data generated from a polynomial in the space
    disc = Discretization(build_uniform_quad_mesh(4), 3)
    m = disc.mesh
    p = lambda x: x[:, 0] ** 3 - x[:, 0] * x[:, 1] ** 2
    gp = lambda x: np.stack([3 * x[:, 0] ** 2 - x[:, 1] ** 2, -2 * x[:, 0] * x[:, 1]], -1)
    P = interpolate(m, disc.layout, p, gp)
    A = assemble_linearized(disc, 0.1, "identity", free_only=False)
    free, con = disc.layout.free, disc.layout.constrained
    rhs = (A @ P)[free]
    x = solve_linear(A[free][:, free], rhs - A[free][:, con] @ P[con])
    assert np.abs(x - P[free]).max() < 1e-9


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(method="bisection")
    with pytest.raises(ValueError):
        SolverConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolverConfig(tol=-1)


def test_newton_converges_superlinearly(p1_setup):
    pb, disc = p1_setup
    u0 = interpolate(disc.mesh, disc.layout, pb.u, pb.grad_u)
    u, rep = newton_solve(disc, u0, pb, SolverConfig())
    assert rep.converged and rep.residual <= 1e-9
    h = rep.history
    assert all(b < a for a, b in zip(h, h[1:]))
    assert h[2] / h[1] < 0.1 * (h[1] / h[0])


def test_newton_zero_iterations_at_solution(p1_setup):
    pb, disc = p1_setup
    u, _ = solve(disc, pb)
    _, rep = newton_solve(disc, u, pb, SolverConfig())
    assert rep.iterations == 0 and rep.converged


def test_fixed_point_agrees_with_newton(p1_setup):
    pb, disc = p1_setup
    un, rn = solve(disc, pb)
    uf, rf = solve(disc, pb, SolverConfig(method="fixedpoint", max_iter=400))
    assert rn.converged and rf.converged
    assert np.abs(un - uf).max() <= 1e-7


def test_fixed_point_step_at_solution_is_stationary(p1_setup):
    pb, disc = p1_setup
    u, _ = solve(disc, pb, SolverConfig(tol=1e-12))
    v, r = fixed_point_step(disc, u, pb, SolverConfig(damping=1.0))
    assert r <= 1e-11 and np.abs(v - u).max() < 1e-9


def test_fixed_point_vanishing_condition():
    pb = manufactured("quadratic", 0.1, boundary="vanishing")
    disc = Discretization(build_uniform_quad_mesh(16), 3)
    _, rep = solve(disc, pb, SolverConfig(method="fixedpoint", damping=0.5, max_iter=300))
    assert rep.converged


def test_continuation_runs_all_stages():
    disc = Discretization(build_uniform_quad_mesh(6), 2)
    pb = manufactured("quadratic", 1.0, boundary="vanishing")
    stages = list(continuation_solve(disc, lambda e: manufactured("quadratic", e, "vanishing"),
                                     [1.0, 0.3, 0.1, 0.03]))
    assert [s[0] for s in stages] == [1.0, 0.3, 0.1, 0.03]
    assert all(s[2].converged for s in stages)


def test_warm_start_helps_continuation():
    disc = Discretization(build_uniform_quad_mesh(10), 2)
    seq = [0.1, 0.05]
    warm = list(continuation_solve(disc, lambda e: manufactured("p2", e), seq))
    cold = solve(disc, manufactured("p2", 0.05), SolverConfig(warmup_iter=1))[1]
    assert warm[-1][2].iterations <= cold.iterations


def test_solver_deterministic(p1_setup):
    pb, disc = p1_setup
    a, _ = solve(disc, pb)
    b, _ = solve(disc, pb)
    assert np.array_equal(a, b)
