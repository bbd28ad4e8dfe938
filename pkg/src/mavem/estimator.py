"""Estimator-style facade: ``fit`` solves on a mesh, ``predict`` evaluates Pi_0 u_h at points."""
import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .forms import Discretization, ProblemData, StabilizationSpec
from .mesh import Mesh
from .poly import MonomialBasis
from .problems import manufactured
from .solver import SolverConfig, solve
from .study import compute_errors


class MongeAmpereVEM(BaseEstimator):
    """Virtual element solver for ``-eps lap^2 u + det D2u = f`` on a polygonal mesh.

    Parameters mirror :class:`~mavem.solver.SolverConfig` and
    :class:`~mavem.forms.StabilizationSpec`.  ``fit(mesh, problem)`` accepts a
    :class:`~mavem.forms.ProblemData` or the name of a manufactured problem
    (then ``epsilon`` is used).

    Examples
    --------
    >>> from mavem import MongeAmpereVEM, build_uniform_quad_mesh
    >>> est = MongeAmpereVEM(order=2, epsilon=0.1).fit(build_uniform_quad_mesh(4), "quadratic")
    >>> float(est.predict([[0.5, 0.5]])[0])  # doctest: +ELLIPSIS
    0.5...
    """

    def __init__(self, order=2, epsilon=0.01, solver="newton", tol=1e-11, max_iter=100,
                 damping=0.5, phi="frozen", stab="constant", stab_constant=1.0,
                 stab_b_factor=0.0):
        self.order = order
        self.epsilon = epsilon
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.phi = phi
        self.stab = stab
        self.stab_constant = stab_constant
        self.stab_b_factor = stab_b_factor

    def _config(self):
        if not isinstance(self.order, (int, np.integer)) or self.order < 2:
            raise ValueError("order must be an integer >= 2")
        return SolverConfig(method=self.solver, tol=self.tol, max_iter=self.max_iter,
                            damping=self.damping, phi=self.phi,
                            stab=StabilizationSpec(self.stab, self.stab_constant,
                                                   self.stab_b_factor))

    def fit(self, X, y=None, u0=None):
        """Solve on mesh ``X`` for problem ``y``; sets ``coef_`` (global dof vector)."""
        if not isinstance(X, Mesh):
            raise TypeError("X must be a mavem.Mesh")
        if y is None:
            raise ValueError("a problem (ProblemData or manufactured name) is required")
        problem = manufactured(y, self.epsilon) if isinstance(y, str) else y
        if not isinstance(problem, ProblemData):
            raise TypeError("y must be ProblemData or a problem name")
        config = self._config()
        self.discretization_ = Discretization(X, self.order)
        self.coef_, self.report_ = solve(self.discretization_, problem, config, u0=u0)
        self.problem_ = problem
        self.converged_ = self.report_.converged
        self.n_iter_ = self.report_.iterations
        self._locator = cKDTree(np.array([el.centroid for el in X.elements]))
        return self

    def errors(self):
        """``(H2, H1, L2)`` projected errors against the exact solution of the fitted problem."""
        check_is_fitted(self, "coef_")
        rec = compute_errors(self.coef_, self.discretization_, self.problem_)
        return rec.H2, rec.H1, rec.L2

    def score(self, X=None, y=None):
        """Negative L2 error (higher is better), for use with model-selection tools."""
        return -self.errors()[2]

    def locate(self, points):
        """Index of an element containing each point (-1 if outside the mesh)."""
        check_is_fitted(self, "coef_")
        pts = check_array(points, dtype=float)
        if pts.shape[1] != 2:
            raise ValueError("points must have two columns")
        mesh = self.discretization_.mesh
        k = min(8, mesh.n_elements)
        _, cand = self._locator.query(pts, k=k)
        cand = np.atleast_2d(cand).reshape(len(pts), k)
        out = -np.ones(len(pts), dtype=int)
        for i, p in enumerate(pts):
            for c in cand[i]:
                if _inside(mesh.element_polygon(c), p):
                    out[i] = c
                    break
            else:
                for c in range(mesh.n_elements):
                    if _inside(mesh.element_polygon(c), p):
                        out[i] = c
                        break
        return out

    def predict(self, X):
        """Values of the element polynomial Pi_0 u_h at the points ``X``."""
        pts = check_array(X, dtype=float)
        owner = self.locate(pts)
        if np.any(owner < 0):
            raise ValueError("some points lie outside the mesh")
        disc = self.discretization_
        out = np.empty(len(pts))
        for k in np.unique(owner):
            sel = owner == k
            el = disc.mesh.elements[k]
            ops = disc.operators[k]
            c = ops.P0 @ self.coef_[disc.layout.element_dofs[k]]
            out[sel] = MonomialBasis(el.centroid, el.diameter, disc.order).values(pts[sel]) @ c
        return out


def _inside(poly, p, tol=1e-12):
    d = np.roll(poly, -1, axis=0) - poly
    r = p - poly
    cross = d[:, 0] * r[:, 1] - d[:, 1] * r[:, 0]
    return bool(np.all(cross >= -tol * max(1.0, np.abs(d).max())))
