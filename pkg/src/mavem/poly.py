"""Scaled monomial bases, quadrature on polygons and edges, local L2 projections.

Monomials on an element are ``m_a(x) = ((x - x_K) / h_K) ** a`` ordered by total
degree and then by decreasing x-exponent::

    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...

so the basis of degree ``k - 1`` is always a prefix of the basis of degree ``k``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


def dim_poly(k):
    """Dimension of P_k in two variables (zero for negative k)."""
    if k < 0:
        return 0
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(k):
    """Exponent pairs of the degree-``k`` basis as an ``(n, 2)`` int array."""
    exps = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    arr = np.array(exps, dtype=int).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def _index_of(k):
    return {tuple(a): i for i, a in enumerate(monomial_exponents(k))}


@dataclass(frozen=True)
class MonomialBasis:
    """Scaled monomials of total degree <= ``degree`` about ``center`` with scale ``h``."""

    center: np.ndarray
    h: float
    degree: int

    @property
    def dim(self):
        return dim_poly(self.degree)

    @property
    def exponents(self):
        return monomial_exponents(self.degree)

    def _scaled(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - self.center) / self.h

    def values(self, points):
        """Basis values, shape ``(npts, dim)``."""
        return eval_monomials(self._scaled(points), self.degree)

    def gradients(self, points):
        """Basis gradients, shape ``(2, npts, dim)``."""
        return eval_monomial_gradients(self._scaled(points), self.degree) / self.h

    def hessians(self, points):
        """Basis second derivatives, shape ``(2, 2, npts, dim)``."""
        return eval_monomial_hessians(self._scaled(points), self.degree) / self.h**2

    def derivative_matrices(self):
        return monomial_derivative_matrices(self)


def _powers(s, k):
    # s: (npts,) -> (npts, k+1) with column j = s**j
    out = np.ones((s.shape[0], k + 1))
    for j in range(1, k + 1):
        out[:, j] = out[:, j - 1] * s
    return out


def eval_monomials(xi, k):
    """Values of the unscaled monomials ``xi**a`` at points ``xi`` (already scaled)."""
    xi = np.atleast_2d(xi)
    if k < 0:
        return np.zeros((xi.shape[0], 0))
    px = _powers(xi[:, 0], k)
    py = _powers(xi[:, 1], k)
    e = monomial_exponents(k)
    return px[:, e[:, 0]] * py[:, e[:, 1]]


def eval_monomial_gradients(xi, k):
    xi = np.atleast_2d(xi)
    e = monomial_exponents(k)
    n = xi.shape[0]
    px = _powers(xi[:, 0], k)
    py = _powers(xi[:, 1], k)
    out = np.zeros((2, n, e.shape[0]))
    ax, ay = e[:, 0], e[:, 1]
    out[0] = ax * px[:, np.maximum(ax - 1, 0)] * py[:, ay]
    out[1] = ay * px[:, ax] * py[:, np.maximum(ay - 1, 0)]
    return out


def eval_monomial_hessians(xi, k):
    xi = np.atleast_2d(xi)
    e = monomial_exponents(k)
    n = xi.shape[0]
    px = _powers(xi[:, 0], k)
    py = _powers(xi[:, 1], k)
    out = np.zeros((2, 2, n, e.shape[0]))
    ax, ay = e[:, 0], e[:, 1]
    out[0, 0] = ax * (ax - 1) * px[:, np.maximum(ax - 2, 0)] * py[:, ay]
    out[1, 1] = ay * (ay - 1) * px[:, ax] * py[:, np.maximum(ay - 2, 0)]
    out[0, 1] = ax * ay * px[:, np.maximum(ax - 1, 0)] * py[:, np.maximum(ay - 1, 0)]
    out[1, 0] = out[0, 1]
    return out


def monomial_derivative_matrices(basis):
    """Matrices ``(Dx, Dy)`` of shape ``(dim P_{k-1}, dim P_k)``.

    If ``c`` holds coefficients of ``p`` in the degree-k basis, ``Dx @ c`` holds
    the coefficients of ``dp/dx`` in the degree-(k-1) basis of the same element.
    """
    k = basis.degree
    if k < 1:
        raise ValueError("derivative matrices need degree >= 1")
    idx = _index_of(k - 1)
    e = monomial_exponents(k)
    dx = np.zeros((dim_poly(k - 1), dim_poly(k)))
    dy = np.zeros_like(dx)
    for col, (ax, ay) in enumerate(e):
        if ax > 0:
            dx[idx[(ax - 1, ay)], col] = ax / basis.h
        if ay > 0:
            dy[idx[(ax, ay - 1)], col] = ay / basis.h
    return dx, dy


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def integrate(self, values):
        """Integrate sampled values; the first axis of ``values`` runs over points."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule on the reference triangle {s, t >= 0, s + t <= 1}.

    Gauss-Jacobi (alpha=1) in the collapsed direction absorbs the Duffy Jacobian,
    so ``n = ceil((degree + 1) / 2)`` points per direction suffice.
    """
    n = max(1, (degree + 2) // 2)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = gauss_legendre(n)
    u = (1.0 + xj) / 2.0
    wu = wj / 4.0
    v = (1.0 + xl) / 2.0
    wv = wl / 2.0
    s = np.repeat(u, n)
    t = np.repeat(1.0 - u, n) * np.tile(v, n)
    w = np.repeat(wu, n) * np.tile(wv, n)
    pts = np.column_stack([s, t])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def is_convex(poly, tol=1e-14):
    """True if the CCW vertex list ``poly`` has no reflex corner."""
    poly = np.asarray(poly, dtype=float)
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    scale = np.max(np.abs(d)) ** 2
    return bool(np.all(cross >= -tol * scale))


def polygon_area_centroid(poly):
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = cr.sum() / 2.0
    cx = ((x + xn) * cr).sum() / (6.0 * area)
    cy = ((y + yn) * cr).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def polygon_quadrature_points(poly, degree, center=None):
    """Fan-triangulated rule for a convex CCW polygon given by its vertices."""
    poly = np.asarray(poly, dtype=float)
    if not is_convex(poly):
        raise ValueError("polygon quadrature needs a convex element")
    if center is None:
        _, center = polygon_area_centroid(poly)
    ref_pts, ref_w = triangle_rule(degree)
    a = poly - center
    b = np.roll(poly, -1, axis=0) - center
    # triangle (c, v_i, v_{i+1}); twice its area is the Jacobian
    jac = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    pts = (center[None, None, :]
           + ref_pts[None, :, 0:1] * a[:, None, :]
           + ref_pts[None, :, 1:2] * b[:, None, :])
    w = jac[:, None] * ref_w[None, :]
    return pts.reshape(-1, 2), w.reshape(-1)


def polygon_quadrature(element, degree, vertices=None):
    """Quadrature rule on an element exact for total degree <= ``degree``.

    ``element`` is either a :class:`~mavem.mesh.Element` (then ``vertices`` is the
    mesh vertex array) or an ``(n, 2)`` array of CCW polygon vertices.
    """
    if vertices is not None:
        poly = vertices[np.asarray(element.vertex_indices)]
        center = element.centroid
    else:
        poly = np.asarray(element, dtype=float)
        center = None
    pts, w = polygon_quadrature_points(poly, degree, center)
    return QuadratureRule(pts, w, degree)


def edge_quadrature(a, b, degree):
    """Gauss-Legendre rule on the segment from ``a`` to ``b``.

    Returns the rule together with the reference coordinate ``xi`` in [-1, 1]
    (``xi = -1`` at ``a``), which is the edge-basis variable.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = max(1, (degree + 2) // 2)
    xi, w = gauss_legendre(n)
    length = np.linalg.norm(b - a)
    pts = (a + b) / 2.0 + np.outer(xi, (b - a) / 2.0)
    return QuadratureRule(pts, w * length / 2.0, degree), np.array(xi)


def edge_monomials(xi, k):
    """Edge basis ``xi**j``, j = 0..k, shape ``(len(xi), k+1)``."""
    if k < 0:
        return np.zeros((len(xi), 0))
    return _powers(np.asarray(xi, dtype=float), k)


@lru_cache(maxsize=None)
def edge_gram(k, m):
    """``(1/2) * int_{-1}^{1} xi**(i+j) dxi`` for i <= k, j <= m."""
    i = np.arange(k + 1)[:, None]
    j = np.arange(m + 1)[None, :]
    p = i + j
    g = np.where(p % 2 == 0, 1.0 / (p + 1.0), 0.0)
    g.setflags(write=False)
    return g


# --------------------------------------------------------------------------
# L2 projection


class SingularGramError(np.linalg.LinAlgError):
    pass


def solve_gram(gram, rhs, label="element"):
    """Solve a Gram system by Cholesky, falling back to pivoted LU."""
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularGramError(f"Gram matrix on {label} is singular (cond={cond:.3e})")
    try:
        from scipy.linalg import cho_factor, cho_solve
        return cho_solve(cho_factor(gram), rhs)
    except np.linalg.LinAlgError:
        return np.linalg.solve(gram, rhs)


def l2_project_element(f, element, k, vertices=None, f_degree=None, label=None):
    """Coefficients of the L2(K)-orthogonal projection of ``f`` onto P_k(K).

    ``f`` maps an ``(n, 2)`` point array to ``n`` values.  ``f_degree`` tunes the
    quadrature when ``f`` is a polynomial.
    """
    if vertices is not None:
        poly = vertices[np.asarray(element.vertex_indices)]
        center, h = element.centroid, element.diameter
        label = label or f"element {element.index}"
    else:
        poly = np.asarray(element, dtype=float)
        _, center = polygon_area_centroid(poly)
        h = _diameter(poly)
        label = label or "polygon"
    qdeg = 2 * k + (f_degree if f_degree is not None else 2 * k + 2)
    pts, w = polygon_quadrature_points(poly, qdeg, center)
    basis = MonomialBasis(center, h, k)
    m = basis.values(pts)
    gram = (m * w[:, None]).T @ m
    rhs = m.T @ (w * np.asarray(f(pts), dtype=float))
    return solve_gram(gram, rhs, label)


def _diameter(poly):
    d = poly[:, None, :] - poly[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())
