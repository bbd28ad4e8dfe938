"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import time

import numpy as np
import pytest

from mavem.cli import main
from mavem.forms import Discretization, assemble_jacobian, assemble_residual, assemble_rhs
from mavem.mesh import build_uniform_quad_mesh, build_voronoi_mesh
from mavem.poly import MonomialBasis, dim_poly
from mavem.problems import manufactured
from mavem.solver import solve
from mavem.space import element_operators, interpolate
from mavem.study import compute_errors, run_convergence_study, run_epsilon_study

WINDOWS = {2: ((0.8, 1.2), (1.7, 2.3), (1.6, 2.4)),
           3: ((1.7, 2.3), (2.6, 3.4), (3.5, 4.5))}


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def in_windows(eoc, windows, widen=0.0):
    return all(lo - widen <= r <= hi + widen for r, (lo, hi) in zip(eoc, windows))


def fmt(eoc):
    return "/".join(f"{r:.2f}" for r in eoc)


def projection_error(mesh, k, order):
    ops = element_operators(mesh, k, order)
    el = mesh.elements[k]
    basis = MonomialBasis(el.centroid, el.diameter, order)
    dx, dy = basis.derivative_matrices()
    ddx, ddy = MonomialBasis(el.centroid, el.diameter, order - 1).derivative_matrices()
    n2 = dim_poly(order - 2)
    grad = np.stack([dx, dy])
    hess = np.stack([[ddx @ dx, ddx @ dy], [ddy @ dx, ddy @ dy]])[:, :, :n2]
    # monomial coefficients are O(1), O(1/h), O(1/h^2); rescale so all errors are relative
    h = el.diameter
    return max(np.abs(ops.P0 @ ops.D - np.eye(basis.dim)).max(),
               np.abs(ops.P1 @ ops.D - grad).max() * h / max(1.0, np.abs(grad).max() * h),
               np.abs(ops.P2 @ ops.D - hess).max() * h**2 / max(1.0, np.abs(hess).max() * h**2))


def test_criterion_1_projection_consistency(capsys):
    t0 = time.perf_counter()
    meshes = (build_uniform_quad_mesh(4), build_voronoi_mesh(30, rng_seed=0))
    err = max(projection_error(m, k, order) for order in (2, 3, 4) for m in meshes
              for k in range(m.n_elements))
    dt = time.perf_counter() - t0
    report(capsys, 1, err <= 1e-10 and dt < 10, f"max rel error {err:.2e}, {dt:.1f}s")


def test_criterion_2_patch_test(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    meshes = (build_uniform_quad_mesh(8), build_voronoi_mesh(100, rng_seed=0))
    for eps in (1.0, 1e-2):
        pb = manufactured("quadratic", eps)
        for m in meshes:
            for order in (2, 3):
                disc = Discretization(m, order)
                u, rep = solve(disc, pb)
                assert rep.converged
                rec = compute_errors(u, disc, pb)
                ui = interpolate(m, disc.layout, pb.u, pb.grad_u)
                worst = max(worst, rec.H2, rec.H1, rec.L2, np.abs(u - ui).max())
    dt = time.perf_counter() - t0
    report(capsys, 2, worst <= 1e-8 and dt < 30, f"max error {worst:.2e}, {dt:.1f}s")


def test_criterion_3_jacobian(capsys):
    t0 = time.perf_counter()
    pb = manufactured("p1", 1e-2)
    m = build_uniform_quad_mesh(4)
    disc = Discretization(m, 2)
    free = disc.layout.free
    rhs = assemble_rhs(disc, pb)
    base = interpolate(m, disc.layout, pb.u, pb.grad_u)
    rng = np.random.default_rng(2024)
    worst, tau = 0.0, 1e-6
    for _ in range(3):
        u = base.copy()
        u[free] += 0.1 * rng.standard_normal(len(free))
        J = assemble_jacobian(disc, u, pb).toarray()
        fd = np.empty_like(J)
        for j, d in enumerate(free):
            e = np.zeros(disc.n_dofs)
            e[d] = tau
            fd[:, j] = (assemble_residual(disc, u + e, pb, rhs=rhs)
                        - assemble_residual(disc, u - e, pb, rhs=rhs)) / (2 * tau)
        worst = max(worst, np.linalg.norm(fd - J) / np.linalg.norm(J))
    dt = time.perf_counter() - t0
    report(capsys, 3, worst <= 1e-5 and dt < 10, f"max rel error {worst:.2e}, {dt:.1f}s")


@pytest.mark.slow
def test_criterion_4_convergence_problem1(capsys):
    t0 = time.perf_counter()
    ok, parts = True, []
    for order in (2, 3):
        res = run_convergence_study("p1", order, [11, 20, 40, 80])
        eoc = res.records[-1].eoc
        good = res.converged and in_windows(eoc, WINDOWS[order])
        ok &= good
        parts.append(f"l={order} EOC H2/H1/L2 {fmt(eoc)}")
    dt = time.perf_counter() - t0
    report(capsys, 4, ok and dt <= 900, "; ".join(parts) + f", {dt:.0f}s")


@pytest.mark.slow
def test_criterion_5_convergence_other(capsys):
    t0 = time.perf_counter()
    ok, parts = True, []
    for name in ("p2", "p3"):
        res = run_convergence_study(name, 2, [11, 20, 40])
        eoc = res.records[-1].eoc
        ok &= res.converged and in_windows(eoc, WINDOWS[2])
        parts.append(f"{name} {fmt(eoc)}")
    res = run_convergence_study("p1", 2, [121, 400, 1600], mesh_kind="voronoi")
    eoc = res.records[-1].eoc
    ok &= res.converged and in_windows(eoc, WINDOWS[2], widen=0.4)
    parts.append(f"p1 voronoi {fmt(eoc)}")
    dt = time.perf_counter() - t0
    report(capsys, 5, ok and dt <= 1200, "; ".join(parts) + f", {dt:.0f}s")


@pytest.mark.slow
def test_criterion_6_epsilon_trend(capsys):
    # Expected to fail: the continuous solutions do not decay by a factor 5 in H2 over the
    # schedule and the errors rise between eps = 1 and eps = 0.5 (mesh-converged values).
    t0 = time.perf_counter()
    res = run_epsilon_study(order=3, size=20)
    errs = np.array([[r.H2, r.H1, r.L2] for r in res.records])
    factors = errs[0] / errs[-1]
    monotone = bool(np.all(errs[1:] <= 1.05 * errs[:-1]))
    dt = time.perf_counter() - t0
    ok = res.converged and bool(np.all(factors >= 5)) and monotone and dt <= 600
    report(capsys, 6, ok, f"decay factors H2/H1/L2 {fmt(factors)}, "
                          f"non-increasing within 5%: {monotone}, {dt:.0f}s")


def test_criterion_7_determinism(capsys, tmp_path):
    runs = [["--problem", "p1", "--sizes", "4,8", "--order", "3"],
            ["--problem", "p1", "--mesh", "voronoi", "--sizes", "20,40", "--order", "2"],
            ["--study", "epsilon", "--sizes", "6", "--order", "2", "--epsilons", "1,0.1,0.01"]]
    ok = True
    for i, args in enumerate(runs):
        a, b = tmp_path / f"{i}a.dat", tmp_path / f"{i}b.dat"
        main(args + ["--output", str(a)])
        main(args + ["--output", str(b)])
        ok &= a.read_bytes() == b.read_bytes()
    report(capsys, 7, ok, f"{len(runs)} studies rerun, outputs identical: {ok}")
