"""The C0-conforming, C1-nonconforming virtual element space of order l >= 2.

Local degrees of freedom on an element with n edges, in this order:

* vertex values (n),
* edge moments ``(1/|e|) int_e v xi**j ds``, j <= l-2 (n * (l-1)),
* edge normal moments ``int_e dv/dn_e xi**j ds``, j <= l-2 (n * (l-1)),
* interior moments ``(1/|K|) int_K v m_a dx``, |a| <= l-4.

Edge quantities always use the global frame of the edge: ``xi`` runs from -1
at the first endpoint to +1 at the second and ``n_e`` is the outward normal of
the first adjacent element (K+).  Local and global dofs therefore coincide and
no sign bookkeeping is needed during assembly; an element that is K- of an
edge sees ``n_e`` as its inward normal and accounts for that when integrating
by parts.
"""
from dataclasses import dataclass

import numpy as np

from .poly import (MonomialBasis, dim_poly, edge_gram, edge_monomials, edge_quadrature,
                   polygon_quadrature_points, solve_gram)


NORMAL_FIT_WEIGHT = 0.1


class UnsupportedOrderError(ValueError):
    pass


class DegenerateElementError(np.linalg.LinAlgError):
    pass


def _check_order(order):
    if order < 2:
        raise UnsupportedOrderError(f"order must be >= 2, got {order}")


def local_dof_count(n_edges, order):
    return n_edges + 2 * n_edges * (order - 1) + dim_poly(order - 4)


@dataclass(frozen=True)
class DofLayout:
    """Global numbering: vertices, edge moments, edge normal moments, interior moments."""

    order: int
    n_vertices: int
    n_edges: int
    n_elements: int
    element_dofs: tuple          # per element, global index array in local order
    dof_kind: np.ndarray         # 0 vertex, 1 edge moment, 2 normal moment, 3 interior
    dof_entity: np.ndarray       # vertex / edge / element index owning the dof
    dof_moment: np.ndarray       # moment index within the entity
    is_dirichlet: np.ndarray
    free: np.ndarray             # indices of free dofs
    constrained: np.ndarray      # indices of Dirichlet dofs

    @property
    def n_dofs(self):
        return self.dof_kind.shape[0]

    @property
    def n_free(self):
        return self.free.shape[0]

    def vertex_dof(self, v):
        return v

    def edge_dofs(self, e):
        m = self.order - 1
        return self.n_vertices + e * m + np.arange(m)

    def normal_dofs(self, e):
        m = self.order - 1
        return self.n_vertices + self.n_edges * m + e * m + np.arange(m)

    def interior_dofs(self, k):
        ni = dim_poly(self.order - 4)
        return self.n_vertices + 2 * self.n_edges * (self.order - 1) + k * ni + np.arange(ni)


VERTEX, EDGE_MOMENT, NORMAL_MOMENT, INTERIOR = 0, 1, 2, 3


def build_dof_layout(mesh, order):
    _check_order(order)
    m = order - 1
    ni = dim_poly(order - 4)
    nv, ne, nk = mesh.n_vertices, mesh.n_edges, mesh.n_elements
    n = nv + 2 * ne * m + nk * ni
    kind = np.empty(n, dtype=int)
    entity = np.empty(n, dtype=int)
    moment = np.empty(n, dtype=int)
    kind[:nv], entity[:nv], moment[:nv] = VERTEX, np.arange(nv), 0
    s = nv
    for kd in (EDGE_MOMENT, NORMAL_MOMENT):
        kind[s:s + ne * m] = kd
        entity[s:s + ne * m] = np.repeat(np.arange(ne), m)
        moment[s:s + ne * m] = np.tile(np.arange(m), ne)
        s += ne * m
    kind[s:] = INTERIOR
    entity[s:] = np.repeat(np.arange(nk), ni)
    moment[s:] = np.tile(np.arange(ni), nk)

    bnd_edge = np.array([ed.is_boundary for ed in mesh.edges], dtype=bool)
    dirichlet = np.zeros(n, dtype=bool)
    dirichlet[:nv] = mesh.boundary_vertex
    dirichlet[nv:nv + ne * m] = np.repeat(bnd_edge, m)

    elem_dofs = []
    for el in mesh.elements:
        e = np.asarray(el.edge_indices)
        idx = np.concatenate([
            np.asarray(el.vertex_indices),
            (nv + e[:, None] * m + np.arange(m)).ravel(),
            (nv + ne * m + e[:, None] * m + np.arange(m)).ravel(),
            nv + 2 * ne * m + el.index * ni + np.arange(ni),
        ]).astype(int)
        idx.setflags(write=False)
        elem_dofs.append(idx)
    for arr in (kind, entity, moment, dirichlet):
        arr.setflags(write=False)
    return DofLayout(order, nv, ne, nk, tuple(elem_dofs), kind, entity, moment, dirichlet,
                     np.flatnonzero(~dirichlet), np.flatnonzero(dirichlet))


# --------------------------------------------------------------------------
# local construction


class LocalElement:
    """Geometry and dof bookkeeping of one element for the projection constructions."""

    def __init__(self, polygon, centroid, diameter, edge_signs, order, label="element"):
        _check_order(order)
        self.order = order
        self.poly = np.asarray(polygon, dtype=float)
        self.centroid = np.asarray(centroid, dtype=float)
        self.h = float(diameter)
        self.signs = tuple(int(s) for s in edge_signs)
        self.label = label
        self.n = len(self.poly)
        self.m = order - 1
        self.ni = dim_poly(order - 4)
        self.n_dof = local_dof_count(self.n, order)
        self.basis = MonomialBasis(self.centroid, self.h, order)

        self.qpts, self.qw = polygon_quadrature_points(self.poly, 2 * order, self.centroid)
        self.area = float(self.qw.sum())
        self.edges = []
        for i in range(self.n):
            p, q = self.poly[i], self.poly[(i + 1) % self.n]
            if self.signs[i] > 0:
                a, b, ia, ib = p, q, i, (i + 1) % self.n
            else:
                a, b, ia, ib = q, p, (i + 1) % self.n, i
            rule, xi = edge_quadrature(a, b, 2 * order)
            length = float(np.linalg.norm(b - a))
            t = (b - a) / length
            self.edges.append(dict(a=a, b=b, ia=ia, ib=ib, rule=rule, xi=xi, length=length,
                                   t=t, n=np.array([t[1], -t[0]]), sigma=self.signs[i]))

    # local dof index helpers
    def edge_moment_index(self, i):
        return self.n + i * self.m + np.arange(self.m)

    def normal_moment_index(self, i):
        return self.n + self.n * self.m + i * self.m + np.arange(self.m)

    def interior_index(self):
        return self.n + 2 * self.n * self.m + np.arange(self.ni)

    def boundary_index(self):
        return np.arange(self.n + 2 * self.n * self.m)

    def select(self, idx):
        s = np.zeros((len(idx), self.n_dof))
        s[np.arange(len(idx)), idx] = 1.0
        return s

    # dofs of scaled monomials
    def dof_matrix(self):
        """``D`` with ``D[:, a]`` the dofs of the monomial ``m_a`` (shape n_dof x dim P_l)."""
        ell = self.order
        basis = self.basis
        rows = [basis.values(self.poly)]
        d2, d3 = [], []
        for ed in self.edges:
            pts, w = ed["rule"].points, ed["rule"].weights
            pe = edge_monomials(ed["xi"], ell - 2)
            vals = basis.values(pts)
            grads = basis.gradients(pts)
            dn = ed["n"][0] * grads[0] + ed["n"][1] * grads[1]
            d2.append((pe * w[:, None]).T @ vals / ed["length"])
            d3.append((pe * w[:, None]).T @ dn)
        rows += d2 + d3
        if self.ni:
            mi = MonomialBasis(self.centroid, self.h, ell - 4).values(self.qpts)
            vals = basis.values(self.qpts)
            rows.append((mi * self.qw[:, None]).T @ vals / self.area)
        return np.vstack(rows)

    def evaluate_dofs(self, u, grad_u, degree=None):
        """Dofs of a smooth function given callables for its value and gradient."""
        ell = self.order
        deg = degree if degree is not None else 2 * ell + 2
        out = [np.asarray(u(self.poly), dtype=float)]
        d2, d3 = [], []
        for ed in self.edges:
            rule, xi = edge_quadrature(ed["a"], ed["b"], deg)
            pe = edge_monomials(xi, ell - 2)
            d2.append(pe.T @ (rule.weights * u(rule.points)) / ed["length"])
            g = np.asarray(grad_u(rule.points))
            dn = g[..., 0] * ed["n"][0] + g[..., 1] * ed["n"][1]
            d3.append(pe.T @ (rule.weights * dn))
        out += d2 + d3
        if self.ni:
            pts, w = polygon_quadrature_points(self.poly, deg, self.centroid)
            mi = MonomialBasis(self.centroid, self.h, ell - 4).values(pts)
            out.append(mi.T @ (w * u(pts)) / w.sum())
        return np.concatenate([np.atleast_1d(o) for o in out])

    # projections
    def value_projection(self, D=None):
        """Least-squares fit to the boundary dofs with interior moments as hard constraints.

        Normal-moment rows enter with weight ``NORMAL_FIT_WEIGHT`` so the fit is
        driven by the value dofs and the normal moments only settle what the
        values leave undetermined (e.g. cubics on a triangle).
        """
        D = self.dof_matrix() if D is None else D
        nl = D.shape[1]
        bidx, iidx = self.boundary_index(), self.interior_index()
        wts = np.ones(len(bidx))
        wts[self.n + self.n * self.m:] = NORMAL_FIT_WEIGHT
        B, C = wts[:, None] * D[bidx], D[iidx]
        nc = len(iidx)
        kkt = np.zeros((nl + nc, nl + nc))
        kkt[:nl, :nl] = B.T @ B
        kkt[:nl, nl:] = C.T
        kkt[nl:, :nl] = C
        rhs = np.zeros((nl + nc, self.n_dof))
        rhs[:nl] = B.T @ (wts[:, None] * self.select(bidx))
        rhs[nl:] = self.select(iidx)
        return self._solve(kkt, rhs)[:nl]

    def edge_value_projection(self, i):
        """``E0``: coefficients of Pi^e_0 v in the edge basis xi**j, j <= l."""
        ell = self.order
        ed = self.edges[i]
        A = np.zeros((ell + 1, ell + 1))
        A[0] = (-1.0) ** np.arange(ell + 1)
        A[1] = 1.0
        A[2:] = edge_gram(ell - 2, ell)
        rhs = np.zeros((ell + 1, self.n_dof))
        rhs[0, ed["ia"]] = 1.0
        rhs[1, ed["ib"]] = 1.0
        rhs[2:] = self.select(self.edge_moment_index(i))
        return self._solve(A, rhs)

    def edge_normal_projection(self, i, P0, completion=True):
        """``EN``: coefficients of Pi^e_n v (derivative along n_e) in xi**j, j <= l-1.

        The normal moments are matched exactly; the top coefficient is the
        L2 fit to ``grad(Pi_0 v) . n_e`` (or zero-energy when ``completion`` is off).
        """
        ell = self.order
        ed = self.edges[i]
        pts, w = ed["rule"].points, ed["rule"].weights
        pe = edge_monomials(ed["xi"], ell - 1)
        half = ed["length"] / 2.0
        C = 2.0 * half * edge_gram(ell - 2, ell - 1)
        M = (pe * w[:, None]).T @ pe
        nb, nc = ell, ell - 1
        kkt = np.zeros((nb + nc, nb + nc))
        kkt[:nb, :nb] = M
        kkt[:nb, nb:] = C.T
        kkt[nb:, :nb] = C
        rhs = np.zeros((nb + nc, self.n_dof))
        if completion:
            grads = self.basis.gradients(pts)
            dn = ed["n"][0] * grads[0] + ed["n"][1] * grads[1]
            rhs[:nb] = (pe * w[:, None]).T @ dn @ P0
        rhs[nb:] = self.select(self.normal_moment_index(i))
        return self._solve(kkt, rhs)[:nb]

    def gram(self, k):
        b = MonomialBasis(self.centroid, self.h, k)
        v = b.values(self.qpts)
        return (v * self.qw[:, None]).T @ v

    def gradient_projection(self, P0, E0):
        """``P1`` of shape (2, dim P_{l-1}, n_dof)."""
        ell = self.order
        b1 = MonomialBasis(self.centroid, self.h, ell - 1)
        v0 = self.basis.values(self.qpts)
        g1 = b1.gradients(self.qpts)
        G = self.gram(ell - 1)
        out = np.zeros((2, b1.dim, self.n_dof))
        for c in range(2):
            rhs = -(g1[c] * self.qw[:, None]).T @ v0 @ P0
            for i, ed in enumerate(self.edges):
                pts, w = ed["rule"].points, ed["rule"].weights
                pe = edge_monomials(ed["xi"], ell)
                mb = b1.values(pts)
                nc = ed["sigma"] * ed["n"][c]
                rhs += nc * (mb * w[:, None]).T @ pe @ E0[i]
            out[c] = solve_gram(G, rhs, self.label)
        return out

    def hessian_projection(self, P1, E0):
        """``P2`` of shape (2, 2, dim P_{l-2}, n_dof).

        The normal-derivative edge term reads the normal moment dofs directly:
        traces of the test tensors have edge degree <= l-2, so only those
        moments of Pi^e_n v enter.
        """
        ell = self.order
        b1 = MonomialBasis(self.centroid, self.h, ell - 1)
        b2 = MonomialBasis(self.centroid, self.h, ell - 2)
        v1 = b1.values(self.qpts)
        g2 = b2.gradients(self.qpts)
        G = self.gram(ell - 2)
        out = np.zeros((2, 2, b2.dim, self.n_dof))
        edge_terms = []
        for i, ed in enumerate(self.edges):
            pts, w = ed["rule"].points, ed["rule"].weights
            m2 = b2.values(pts)
            # normal part: int_e dv/dn_e m_g ds = sum_k c_gk * D3_k with m_g|e = sum_k c_gk xi^k
            pe_low = edge_monomials(ed["xi"], ell - 2)
            coef = np.linalg.lstsq(pe_low, m2, rcond=None)[0]          # (l-1, dim P_{l-2})
            normal = coef.T @ self.select(self.normal_moment_index(i))
            # tangential part: int_e d/dt_e(Pi^e_0 v) m_g ds
            dpe = np.zeros((len(w), ell + 1))
            pw = edge_monomials(ed["xi"], ell)
            dpe[:, 1:] = pw[:, :-1] * np.arange(1, ell + 1) * (2.0 / ed["length"])
            tang = (m2 * w[:, None]).T @ dpe @ E0[i]
            edge_terms.append((ed, normal, tang))
        for r in range(2):
            for c in range(2):
                rhs = -(g2[c] * self.qw[:, None]).T @ v1 @ P1[r]
                for ed, normal, tang in edge_terms:
                    n, t, s = ed["n"], ed["t"], ed["sigma"]
                    rhs += s * (n[r] * n[c] * normal + t[r] * n[c] * tang)
                out[r, c] = solve_gram(G, rhs, self.label)
        return out

    def _solve(self, A, rhs):
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e14:
            raise DegenerateElementError(f"projection system on {self.label} is singular "
                                         f"(cond={cond:.3e})")
        return np.linalg.solve(A, rhs)


@dataclass(frozen=True)
class ElementOperators:
    """Dense projection matrices of one element acting on local dof vectors."""

    order: int
    h: float
    D: np.ndarray     # (n_dof, dim P_l)
    P0: np.ndarray    # (dim P_l, n_dof)
    P1: np.ndarray    # (2, dim P_{l-1}, n_dof)
    P2: np.ndarray    # (2, 2, dim P_{l-2}, n_dof)
    E0: tuple         # per local edge, (l+1, n_dof)
    EN: tuple         # per local edge, (l, n_dof)

    @property
    def n_dof(self):
        return self.D.shape[0]


def local_element(mesh, k, order):
    el = mesh.elements[k]
    return LocalElement(mesh.element_polygon(k), el.centroid, el.diameter, el.edge_signs, order,
                        label=f"element {k}")


def build_element_operators(loc):
    D = loc.dof_matrix()
    P0 = loc.value_projection(D)
    E0 = tuple(loc.edge_value_projection(i) for i in range(loc.n))
    EN = tuple(loc.edge_normal_projection(i, P0) for i in range(loc.n))
    P1 = loc.gradient_projection(P0, E0)
    P2 = loc.hessian_projection(P1, E0)
    for arr in (D, P0, P1, P2, *E0, *EN):
        arr.setflags(write=False)
    return ElementOperators(loc.order, loc.h, D, P0, P1, P2, E0, EN)


def geometry_key(mesh, k, order):
    """Translation-invariant key: elements with equal keys share their operators."""
    el = mesh.elements[k]
    rel = mesh.element_polygon(k) - el.centroid
    return (order, el.edge_signs, tuple(np.round(rel, 13).ravel().tolist()))


def element_operators(mesh, k, order, cache=None):
    if cache is not None:
        key = geometry_key(mesh, k, order)
        ops = cache.get(key)
        if ops is None:
            ops = cache[key] = build_element_operators(local_element(mesh, k, order))
        return ops
    return build_element_operators(local_element(mesh, k, order))


# thin per-operation entry points


def dof_evaluate(u, grad_u, mesh, k, order):
    return local_element(mesh, k, order).evaluate_dofs(u, grad_u)


def compute_value_projection(mesh, k, order):
    return local_element(mesh, k, order).value_projection()


def compute_edge_value_projection(mesh, k, i, order):
    return local_element(mesh, k, order).edge_value_projection(i)


def compute_edge_normal_projection(mesh, k, i, order, completion=True):
    loc = local_element(mesh, k, order)
    return loc.edge_normal_projection(i, loc.value_projection(), completion)


def compute_gradient_projection(mesh, k, order):
    loc = local_element(mesh, k, order)
    E0 = [loc.edge_value_projection(i) for i in range(loc.n)]
    return loc.gradient_projection(loc.value_projection(), E0)


def compute_hessian_projection(mesh, k, order):
    loc = local_element(mesh, k, order)
    E0 = [loc.edge_value_projection(i) for i in range(loc.n)]
    return loc.hessian_projection(loc.gradient_projection(loc.value_projection(), E0), E0)


def interpolate(mesh, layout, u, grad_u, degree=None):
    """Global dof vector of a smooth function (vertex values, edge and interior moments)."""
    ell = layout.order
    deg = degree if degree is not None else 2 * ell + 2
    out = np.zeros(layout.n_dofs)
    out[:mesh.n_vertices] = u(mesh.vertices)
    for ed in mesh.edges:
        a, b = mesh.vertices[list(ed.endpoint_indices)]
        rule, xi = edge_quadrature(a, b, deg)
        pe = edge_monomials(xi, ell - 2)
        out[layout.edge_dofs(ed.index)] = pe.T @ (rule.weights * u(rule.points)) / ed.length
        g = np.asarray(grad_u(rule.points))
        dn = g[..., 0] * ed.normal[0] + g[..., 1] * ed.normal[1]
        out[layout.normal_dofs(ed.index)] = pe.T @ (rule.weights * dn)
    if ell >= 4:
        for el in mesh.elements:
            pts, w = polygon_quadrature_points(mesh.element_polygon(el.index), deg, el.centroid)
            mi = MonomialBasis(el.centroid, el.diameter, ell - 4).values(pts)
            out[layout.interior_dofs(el.index)] = mi.T @ (w * u(pts)) / w.sum()
    return out
