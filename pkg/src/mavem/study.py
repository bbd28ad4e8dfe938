"""Convergence and epsilon studies: error norms, EOC and plot-ready data files."""
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .forms import Discretization
from .mesh import build_uniform_quad_mesh, build_voronoi_mesh
from .problems import manufactured
from .solver import SolverConfig, solve

log = logging.getLogger(__name__)

EPSILON_SCHEDULE = (1.0, 0.5, 0.25, 0.125, 0.05, 0.025, 0.0125, 0.005, 0.0025, 0.00125, 0.0005)


@dataclass(frozen=True)
class ErrorRecord:
    h: float
    H2: float
    H1: float
    L2: float
    eoc: Optional[tuple] = None

    def __post_init__(self):
        if min(self.H2, self.H1, self.L2) < 0:
            raise ValueError("errors must be non-negative")


@dataclass
class StudyResult:
    records: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    parameters: list = field(default_factory=list)   # h or epsilon per row

    @property
    def converged(self):
        return all(r.converged for r in self.reports)


def compute_errors(u, disc, problem, h=None):
    """Projected error norms ``|D2u - Pi_2 u_h|``, ``|grad u - Pi_1 u_h|``, ``|u - Pi_0 u_h|``."""
    if problem.u is None:
        raise ValueError("problem has no exact solution")
    e = np.zeros(3)
    for blk in disc.blocks:
        B = len(blk.elements)
        pts = blk.points().reshape(-1, 2)
        w = np.broadcast_to(blk.w, (B, blk.w.shape[1]))
        U = u[blk.dofs]
        dH = blk.hessians(U) - np.asarray(problem.hess_u(pts)).reshape(B, -1, 2, 2)
        dG = blk.gradients(U) - np.asarray(problem.grad_u(pts)).reshape(B, -1, 2)
        dV = blk.values(U) - np.asarray(problem.u(pts)).reshape(B, -1)
        e += [(w * (dH**2).sum(axis=(2, 3))).sum(), (w * (dG**2).sum(axis=2)).sum(),
              (w * dV**2).sum()]
    e = np.sqrt(np.maximum(e, 0.0))
    return ErrorRecord(disc.mesh.h_max if h is None else h, *e)


def compute_eoc(records: Sequence[ErrorRecord], key="h"):
    """Attach ``log(e_prev/e)/log(h_prev/h)`` to each record after the first.

    Entries whose error or parameter ratio is degenerate are NaN.
    """
    out = []
    for i, rec in enumerate(records):
        if i == 0:
            out.append(ErrorRecord(rec.h, rec.H2, rec.H1, rec.L2, None))
            continue
        prev = records[i - 1]
        rates = []
        for name in ("H2", "H1", "L2"):
            a, b = getattr(prev, name), getattr(rec, name)
            if a > 0 and b > 0 and prev.h != rec.h:
                rates.append(float(np.log(a / b) / np.log(prev.h / rec.h)))
            else:
                rates.append(float("nan"))
        out.append(ErrorRecord(rec.h, rec.H2, rec.H1, rec.L2, tuple(rates)))
    return out


def write_table(path, records, first="h"):
    """Whitespace-separated table ``<first> H2 H1 L2`` with 12 significant digits."""
    lines = [f"{first} H2 H1 L2"]
    for r in records:
        lines.append(" ".join(f"{v:.11e}" for v in (r.h, r.H2, r.H1, r.L2)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path):
    with open(path) as fh:
        header = fh.readline().split()
        data = np.loadtxt(fh, ndmin=2)
    return header, data


def make_mesh(kind, size, seed=0, lloyd_iterations=100):
    """``quad``: size x size squares; ``voronoi``: ``size`` Lloyd-relaxed cells."""
    if kind == "quad":
        return build_uniform_quad_mesh(int(size))
    if kind == "voronoi":
        return build_voronoi_mesh(int(size), rng_seed=seed, lloyd_iterations=lloyd_iterations)
    raise ValueError(f"unknown mesh family {kind!r}")


def run_convergence_study(problem_name, order, sizes, epsilon=0.01, mesh_kind="quad",
                          config=SolverConfig(), seed=0, output=None):
    """Solve on each mesh of the sequence and record errors against the exact solution."""
    result = StudyResult()
    problem = manufactured(problem_name, epsilon)
    try:
        for size in sizes:
            t0 = time.perf_counter()
            mesh = make_mesh(mesh_kind, size, seed)
            disc = Discretization(mesh, order)
            u, rep = solve(disc, problem, config)
            rec = compute_errors(u, disc, problem)
            result.records.append(rec)
            result.reports.append(rep)
            result.parameters.append(rec.h)
            log.info("%s %s=%s dofs=%d its=%d res=%.2e H2=%.4e H1=%.4e L2=%.4e (%.1fs)",
                     problem_name, mesh_kind, size, disc.n_dofs, rep.iterations, rep.residual,
                     rec.H2, rec.H1, rec.L2, time.perf_counter() - t0)
            if not rep.converged:
                log.error("solver did not converge on mesh %s", size)
                break
    finally:
        result.records = compute_eoc(result.records)
        if output is not None:
            write_table(output, result.records, "h")
    for rec in result.records[1:]:
        log.info("EOC h=%.4e H2=%.3f H1=%.3f L2=%.3f", rec.h, *rec.eoc)
    return result


def run_epsilon_study(order=3, size=20, epsilons=EPSILON_SCHEDULE, mesh_kind="quad",
                      config=SolverConfig(), seed=0, output=None, problem_name="quadratic"):
    """Continuation over a decreasing epsilon schedule with psi = epsilon on the boundary.

    Errors are measured against the epsilon-independent limit solution.
    """
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon schedule must be strictly decreasing")
    mesh = make_mesh(mesh_kind, size, seed)
    disc = Discretization(mesh, order)
    result = StudyResult()
    u = None
    try:
        for e in eps:
            t0 = time.perf_counter()
            problem = manufactured(problem_name, e, boundary="vanishing")
            u, rep = solve(disc, problem, config, u0=u)
            rec = compute_errors(u, disc, problem, h=e)
            result.records.append(rec)
            result.reports.append(rep)
            result.parameters.append(e)
            log.info("epsilon=%g dofs=%d its=%d res=%.2e H2=%.4e H1=%.4e L2=%.4e (%.1fs)", e,
                     disc.n_dofs, rep.iterations, rep.residual, rec.H2, rec.H1, rec.L2,
                     time.perf_counter() - t0)
            if not rep.converged:
                log.error("solver did not converge at epsilon=%g", e)
                break
    finally:
        if output is not None:
            write_table(output, result.records, "Epsilon")
    return result
