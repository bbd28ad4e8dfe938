"""Nonlinear solvers: damped fixed point on the linearised form, Newton, continuation in epsilon."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .forms import (StabilizationSpec, assemble_jacobian, assemble_linearized, assemble_residual,
                    assemble_rhs)

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    method: str = "newton"          # or "fixedpoint"
    tol: float = 1e-11              # max-norm of the residual on free dofs
    max_iter: int = 100
    damping: float = 0.5            # fixed-point relaxation
    phi: str = "frozen"             # fixed-point coefficient: "frozen" or "identity"
    stab: StabilizationSpec = field(default_factory=StabilizationSpec)
    min_step: float = 1e-4          # Newton line-search floor
    warmup_epsilon: float = 1.0
    warmup_tol: float = 0.1
    warmup_iter: int = 10

    def __post_init__(self):
        if self.method not in ("newton", "fixedpoint"):
            raise ValueError(f"unknown solver {self.method!r}")
        if self.phi not in ("frozen", "identity"):
            raise ValueError(f"unknown coefficient strategy {self.phi!r}")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    history: list


def solve_linear(A, b):
    """Sparse LU solve; raises LinAlgError on a singular matrix."""
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("linear solve produced non-finite values")
    return x


def _norm(F):
    return float(np.abs(F).max()) if F.size else 0.0


def fixed_point_step(disc, u, problem, config, rhs=None):
    """One update ``u + omega * d`` with ``A_L d = F(u)``; returns (new u, |F(u)|).

    ``A_L`` approximates ``-F'`` (its second-order part is positive), so this is
    a damped quasi-Newton step.
    """
    free = disc.layout.free
    F = assemble_residual(disc, u, problem, config.stab, rhs=rhs)
    A = assemble_linearized(disc, problem.epsilon, config.phi, config.stab, u=u)
    d = solve_linear(A, F)
    out = u.copy()
    out[free] += config.damping * d
    return out, _norm(F)


def fixed_point_solve(disc, u0, problem, config, tol=None, max_iter=None):
    tol = config.tol if tol is None else tol
    max_iter = config.max_iter if max_iter is None else max_iter
    rhs = assemble_rhs(disc, problem)
    u = u0.copy()
    history = []
    for it in range(max_iter + 1):
        F = assemble_residual(disc, u, problem, config.stab, rhs=rhs)
        r = _norm(F)
        history.append(r)
        if not np.isfinite(r):
            break
        if r <= tol:
            return u, SolveReport(True, it, r, history)
        if it == max_iter:
            break
        A = assemble_linearized(disc, problem.epsilon, config.phi, config.stab, u=u)
        u[disc.layout.free] += config.damping * solve_linear(A, F)
    return u, SolveReport(False, len(history) - 1, history[-1], history)


def newton_solve(disc, u0, problem, config, tol=None, max_iter=None):
    """Newton with backtracking on the max-norm of the residual."""
    tol = config.tol if tol is None else tol
    max_iter = config.max_iter if max_iter is None else max_iter
    free = disc.layout.free
    rhs = assemble_rhs(disc, problem)
    u = u0.copy()
    F = assemble_residual(disc, u, problem, config.stab, rhs=rhs)
    r = _norm(F)
    history = [r]
    for it in range(max_iter):
        if r <= tol:
            return u, SolveReport(True, it, r, history)
        J = assemble_jacobian(disc, u, problem, config.stab)
        delta = solve_linear(J, -F)
        step = 1.0
        while True:
            trial = u.copy()
            trial[free] += step * delta
            Ft = assemble_residual(disc, trial, problem, config.stab, rhs=rhs)
            rt = _norm(Ft)
            if rt < r or step <= config.min_step:
                break
            step /= 2
        u, F, r = trial, Ft, rt
        history.append(r)
        if not np.isfinite(r):
            break
    return u, SolveReport(bool(r <= tol), len(history) - 1, r, history)


def solve(disc, problem, config=SolverConfig(), u0=None):
    """Solve from ``u0`` (default: warm start from the lift of g, see :func:`warm_start`)."""
    if u0 is None:
        u0 = warm_start(disc, problem, config)
    else:
        u0 = u0.copy()
        lift = disc.dirichlet_lift(problem.g)
        u0[disc.layout.constrained] = lift[disc.layout.constrained]
    method = newton_solve if config.method == "newton" else fixed_point_solve
    return method(disc, u0, problem, config)


def warm_start(disc, problem, config=SolverConfig()):
    """A few loose iterations with epsilon = ``warmup_epsilon``, starting from the lift of g."""
    u0 = disc.dirichlet_lift(problem.g)
    if problem.epsilon >= config.warmup_epsilon:
        return u0
    method = newton_solve if config.method == "newton" else fixed_point_solve
    u, rep = method(disc, u0, problem.with_epsilon(config.warmup_epsilon), config,
                    tol=config.warmup_tol, max_iter=config.warmup_iter)
    if not np.all(np.isfinite(u)):
        return u0
    log.debug("warm start: %d iterations, residual %.3e", rep.iterations, rep.residual)
    return u


def continuation_solve(disc, problem, epsilons, config=SolverConfig()):
    """Solve for each epsilon in ``epsilons`` in order, starting each from the previous solution.

    Yields ``(epsilon, u, report)``.
    """
    u = None
    for eps in epsilons:
        p = problem(eps) if callable(problem) and not hasattr(problem, "epsilon") \
            else problem.with_epsilon(eps)
        u, rep = solve(disc, p, config, u0=u)
        yield eps, u, rep
