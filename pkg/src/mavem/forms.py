"""Discrete forms: linearised operator, nonlinear residual, Jacobian and load vector.

For an element with projection matrices P0, P1, P2 and stabilisation matrix S
(the dofi-dofi Gram matrix of ``v - Pi_0 v``):

* linearised form: ``eps P2'M2 P2 + P1' M_Phi P1 + (eps/h^2 + c_Phi) S``
* nonlinear form:  ``-eps P2'M2 P2 u - eps/h^2 S u + int det(Pi_2 u) Pi_0 w + c_b S u``

Element data is grouped in :class:`_Block` objects whose arrays carry a leading
axis of length 1 (congruent elements sharing operators) or B (one slice per
element); all kernels broadcast over that axis.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.sparse import coo_matrix

from .poly import dim_poly, edge_monomials, edge_quadrature, polygon_quadrature_points, \
    MonomialBasis
from .space import build_dof_layout, element_operators, local_element


def det2(H):
    """Determinant of 2x2 matrices stored in the last two axes."""
    H = np.asarray(H)
    return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]


def cofactor(H):
    """Cofactor of 2x2 matrices, ``[[h22, -h21], [-h12, h11]]``; d det(H)[dH] = cof(H):dH."""
    H = np.asarray(H)
    C = np.empty_like(H, dtype=float)
    C[..., 0, 0] = H[..., 1, 1]
    C[..., 0, 1] = -H[..., 1, 0]
    C[..., 1, 0] = -H[..., 0, 1]
    C[..., 1, 1] = H[..., 0, 0]
    return C


def spd_clamp(C, floor=1e-2):
    """Symmetric part of ``C`` with eigenvalues raised to ``floor * max(1, largest)``.

    Keeps a frozen cofactor field usable as an elliptic coefficient at iterates
    that are not (yet) convex.
    """
    S = 0.5 * (C + np.swapaxes(C, -1, -2))
    lam, V = np.linalg.eigh(S)
    lo = floor * np.maximum(1.0, lam[..., -1:])
    lam = np.maximum(lam, lo)
    return np.einsum("...ij,...j,...kj->...ik", V, lam, V)


@dataclass(frozen=True)
class ProblemData:
    """Data of ``-eps lap^2 u + det D2u = f``, ``u = g`` and ``lap u = psi`` on the boundary.

    Callables take an ``(n, 2)`` point array.  ``g_hess`` (Hessian of an
    extension of g) gives the tangential second derivative on straight edges;
    without it a finite-difference stencil along the edge is used.
    """

    epsilon: float
    f: Callable
    g: Callable
    psi: Callable
    g_hess: Optional[Callable] = None
    u: Optional[Callable] = None
    grad_u: Optional[Callable] = None
    hess_u: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def with_epsilon(self, epsilon):
        """Same data (f, g, psi) with a different regularisation weight."""
        return replace(self, epsilon=float(epsilon))

    def g_tt(self, points, tangent, h):
        if self.g_hess is not None:
            H = np.asarray(self.g_hess(points))
            return np.einsum("i,nij,j->n", tangent, H, tangent)
        # 4th-order central differences along the edge
        d = h / 64.0
        t = np.asarray(tangent)
        gp = [self.g(points + s * d * t) for s in (-2, -1, 0, 1, 2)]
        return (-gp[0] + 16 * gp[1] - 30 * gp[2] + 16 * gp[3] - gp[4]) / (12 * d * d)


@dataclass(frozen=True)
class StabilizationSpec:
    """Coefficients of the dofi-dofi terms.

    ``mode="constant"`` uses ``constant`` where the linearised form would use
    the sup-norm of the coefficient field and the determinant form the
    sup-norm of the cofactor of the mean Hessian; ``mode="supnorm"`` uses those
    sup-norms.  The determinant-form term is further multiplied by
    ``b_factor``: 1 gives the form with a positive coefficient, 0 (default)
    drops it, -1 matches the sign of the linearisation.
    """

    mode: str = "constant"
    constant: float = 1.0
    b_factor: float = 0.0

    def __post_init__(self):
        if self.mode not in ("constant", "supnorm"):
            raise ValueError(f"unknown stabilisation mode {self.mode!r}")
        if not self.constant >= 0:
            raise ValueError("stabilisation constant must be non-negative")


@dataclass
class GlobalSystem:
    matrix: object          # sparse, free x free
    rhs: np.ndarray         # free
    lift: np.ndarray        # full vector carrying the Dirichlet values
    free: np.ndarray
    symmetric: bool = False


def local_stab_matrix(ops):
    """``(I - D P0)'(I - D P0)``: the dofi-dofi form evaluated on ``v - Pi_0 v``."""
    R = np.eye(ops.n_dof) - ops.D @ ops.P0
    return R.T @ R


@dataclass
class _Block:
    elements: np.ndarray    # (B,)
    dofs: np.ndarray        # (B, N)
    centroids: np.ndarray   # (B, 2)
    area: np.ndarray        # (B,)
    h: np.ndarray           # (G,)  G in {1, B}
    P0: np.ndarray          # (G, nl, N)
    P1: np.ndarray          # (G, 2*n1, N)
    P2: np.ndarray          # (G, 4*n2, N)
    K2: np.ndarray          # (G, N, N)   P2' M2 P2
    S: np.ndarray           # (G, N, N)
    Mq: np.ndarray          # (G, nq, nl) scaled monomials at quadrature points
    rel: np.ndarray         # (G, nq, 2)  quadrature points relative to centroid
    w: np.ndarray           # (G, nq)
    Hmean: np.ndarray       # (G, 4, N)   mean of Pi_2 over the element
    n1: int = 0
    n2: int = 0

    def points(self):
        return self.centroids[:, None, :] + self.rel

    def hessians(self, U):
        """Pi_2 u at quadrature points, shape (B, nq, 2, 2)."""
        c2 = (self.P2 @ U[:, :, None])[..., 0].reshape(len(U), 4, self.n2)
        Hq = self.Mq[:, :, :self.n2] @ np.swapaxes(c2, 1, 2)
        return Hq.reshape(len(U), -1, 2, 2)

    def gradients(self, U):
        c1 = (self.P1 @ U[:, :, None])[..., 0].reshape(len(U), 2, self.n1)
        return self.Mq[:, :, :self.n1] @ np.swapaxes(c1, 1, 2)

    def values(self, U):
        c0 = (self.P0 @ U[:, :, None])[..., 0]
        return (self.Mq @ c0[:, :, None])[..., 0]


class Discretization:
    """Mesh, dof layout and precomputed element operators for one polynomial order."""

    def __init__(self, mesh, order, share_operators=True):
        self.mesh = mesh
        self.order = order
        self.layout = build_dof_layout(mesh, order)
        cache = {} if share_operators else None
        self.operators = [element_operators(mesh, k, order, cache) for k in range(mesh.n_elements)]
        self.nl, self.n1, self.n2 = dim_poly(order), dim_poly(order - 1), dim_poly(order - 2)
        self.quad_degree = 3 * order
        self.blocks = self._make_blocks()

    # ------------------------------------------------------------------
    def _element_arrays(self, k):
        mesh, ops = self.mesh, self.operators[k]
        el = mesh.elements[k]
        pts, w = polygon_quadrature_points(mesh.element_polygon(k), self.quad_degree, el.centroid)
        basis = MonomialBasis(el.centroid, el.diameter, self.order)
        Mq = basis.values(pts)
        M2 = Mq[:, :self.n2]
        G2 = (M2 * w[:, None]).T @ M2
        P2 = ops.P2.reshape(4 * self.n2, ops.n_dof)
        K2 = sum(ops.P2[r, c].T @ G2 @ ops.P2[r, c] for r in range(2) for c in range(2))
        mean2 = (w @ M2) / w.sum()
        Hmean = np.einsum("a,rcan->rcn", mean2, ops.P2).reshape(4, ops.n_dof)
        return dict(h=ops.h, P0=ops.P0, P1=ops.P1.reshape(2 * self.n1, ops.n_dof), P2=P2,
                    K2=K2, S=local_stab_matrix(ops), Mq=Mq, rel=pts - el.centroid, w=w,
                    Hmean=Hmean)

    def _make_blocks(self):
        mesh = self.mesh
        by_ops = {}
        for k, ops in enumerate(self.operators):
            by_ops.setdefault(id(ops), []).append(k)
        shared, loose = [], {}
        for ks in by_ops.values():
            if len(ks) >= 8:
                shared.append(ks)
            else:
                for k in ks:
                    loose.setdefault(self.operators[k].n_dof, []).append(k)
        blocks = []
        for ks in shared:
            arr = self._element_arrays(ks[0])
            blocks.append(self._block(np.array(ks), {n: np.asarray(v)[None] for n, v in arr.items()}))
        for n_dof in sorted(loose):
            ks = loose[n_dof]
            arrs = [self._element_arrays(k) for k in ks]
            stacked = {n: np.stack([np.asarray(a[n]) for a in arrs]) for n in arrs[0]}
            blocks.append(self._block(np.array(ks), stacked))
        return blocks

    def _block(self, ks, arr):
        mesh = self.mesh
        return _Block(
            elements=ks,
            dofs=np.stack([self.layout.element_dofs[k] for k in ks]),
            centroids=np.stack([mesh.elements[k].centroid for k in ks]),
            area=np.array([mesh.elements[k].area for k in ks]),
            n1=self.n1, n2=self.n2, **arr)

    # ------------------------------------------------------------------
    @property
    def n_dofs(self):
        return self.layout.n_dofs

    def dirichlet_lift(self, g):
        """Full dof vector with the dof-interpolant of g on the boundary and zeros elsewhere."""
        mesh, layout = self.mesh, self.layout
        out = np.zeros(layout.n_dofs)
        bv = np.flatnonzero(mesh.boundary_vertex)
        out[bv] = g(mesh.vertices[bv])
        ell = self.order
        for ed in mesh.edges:
            if not ed.is_boundary:
                continue
            a, b = mesh.vertices[list(ed.endpoint_indices)]
            rule, xi = edge_quadrature(a, b, 2 * ell + 2)
            pe = edge_monomials(xi, ell - 2)
            out[layout.edge_dofs(ed.index)] = pe.T @ (rule.weights * g(rule.points)) / ed.length
        return out

    def _scatter_vec(self, block, vals, out):
        np.add.at(out, block.dofs.ravel(), vals.ravel())

    def _triplets(self, block, mats, rows, cols, data):
        B, N = block.dofs.shape
        rows.append(np.broadcast_to(block.dofs[:, :, None], (B, N, N)).ravel())
        cols.append(np.broadcast_to(block.dofs[:, None, :], (B, N, N)).ravel())
        data.append(np.broadcast_to(mats, (B, N, N)).ravel())

    def _to_sparse(self, rows, cols, data, free_only=True):
        rows, cols, data = np.concatenate(rows), np.concatenate(cols), np.concatenate(data)
        n = self.layout.n_dofs
        if free_only:
            fmap = -np.ones(n, dtype=int)
            fmap[self.layout.free] = np.arange(self.layout.n_free)
            r, c = fmap[rows], fmap[cols]
            keep = (r >= 0) & (c >= 0)
            nf = self.layout.n_free
            return coo_matrix((data[keep], (r[keep], c[keep])), shape=(nf, nf)).tocsr()
        return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


# --------------------------------------------------------------------------
# coefficient fields and stabilisation weights


def _phi_at(block, U, phi):
    """Coefficient field at quadrature points, shape (B, nq, 2, 2)."""
    if phi == "identity":
        B, nq = len(U), block.w.shape[1]
        return np.broadcast_to(np.eye(2), (B, nq, 2, 2))
    if phi == "frozen":
        return spd_clamp(cofactor(block.hessians(U)))
    if callable(phi):
        pts = block.points() if block.rel.shape[0] == len(U) else \
            block.centroids[:, None, :] + block.rel
        return np.asarray(phi(pts.reshape(-1, 2))).reshape(len(U), -1, 2, 2)
    raise ValueError(f"unknown coefficient strategy {phi!r}")


def _phi_stab_weight(Phi, stab):
    if stab.mode == "constant":
        return np.full(Phi.shape[0], stab.constant)
    return np.sqrt((Phi**2).sum(axis=(-1, -2))).max(axis=1)


def _b_stab_weight(block, U, stab):
    """Weight of the dofi-dofi term of the determinant form and its gradient in u."""
    B = len(U)
    if stab.b_factor == 0:
        return np.zeros(B), None
    if stab.mode == "constant":
        return np.full(B, stab.b_factor * stab.constant), None
    Hbar = (block.Hmean @ U[:, :, None])[..., 0]        # (B, 4)
    nrm = np.sqrt((Hbar**2).sum(axis=1))                 # |cof(Hbar)|_F = |Hbar|_F
    safe = np.where(nrm > 0, nrm, 1.0)
    grad = np.einsum("bk,bkn->bn", Hbar / safe[:, None],
                     np.broadcast_to(block.Hmean, (B,) + block.Hmean.shape[1:]))
    grad[nrm == 0] = 0.0
    return stab.b_factor * nrm, stab.b_factor * grad


# --------------------------------------------------------------------------
# assembly


def assemble_linearized(disc, epsilon, phi="identity", stab=StabilizationSpec(), u=None,
                        free_only=True):
    """Sparse matrix of the linearised form.

    ``phi`` is ``"identity"``, ``"frozen"`` (cofactor of Pi_2 u at quadrature
    points, requires ``u``) or a callable returning (n, 2, 2) values.
    """
    rows, cols, data = [], [], []
    u = np.zeros(disc.n_dofs) if u is None else u
    n1 = disc.n1
    for blk in disc.blocks:
        U = u[blk.dofs]
        Phi = _phi_at(blk, U, phi)
        M1 = blk.Mq[:, :, :n1]
        P1 = blk.P1.reshape(blk.P1.shape[0], 2, n1, -1)
        G = 0.0
        for i in range(2):
            for j in range(2):
                W = blk.w[:, :, None] * Phi[:, :, i, j][:, :, None]       # (B, nq, 1)
                Mij = np.swapaxes(M1, 1, 2) @ (W * M1)                    # (B, n1, n1)
                G = G + np.swapaxes(P1[:, i], 1, 2) @ Mij @ P1[:, j]
        c_phi = _phi_stab_weight(Phi, stab)
        h2 = (blk.h**-2)[:, None, None]
        mats = epsilon * blk.K2 + G + (epsilon * h2 + c_phi[:, None, None]) * blk.S
        disc._triplets(blk, mats, rows, cols, data)
    return disc._to_sparse(rows, cols, data, free_only)


def assemble_rhs(disc, problem):
    """Load vector ``int f Pi_0 w + eps sum_{e on boundary} int_e (g_tt - psi) Pi^e_n w``."""
    out = np.zeros(disc.n_dofs)
    for blk in disc.blocks:
        pts = blk.points()
        B = len(blk.elements)
        fq = np.asarray(problem.f(pts.reshape(-1, 2))).reshape(B, -1)
        mom = np.swapaxes(blk.Mq, 1, 2) @ (blk.w * fq)[:, :, None]        # (B, nl, 1)
        vals = (np.swapaxes(blk.P0, 1, 2) @ mom)[..., 0]
        disc._scatter_vec(blk, vals, out)
    out += problem.epsilon * boundary_load(disc, problem)
    return out


def boundary_load(disc, problem):
    """``sum_{e on boundary} int_e (g_tt - psi) Pi^e_n w ds`` as a full dof vector."""
    mesh, ell = disc.mesh, disc.order
    out = np.zeros(disc.n_dofs)
    for ed in mesh.edges:
        if not ed.is_boundary:
            continue
        k = ed.adjacent_elements[0]
        el = mesh.elements[k]
        i = el.edge_indices.index(ed.index)
        a, b = mesh.vertices[list(ed.endpoint_indices)]
        rule, xi = edge_quadrature(a, b, 2 * ell + 2)
        wt = problem.g_tt(rule.points, ed.tangent, ed.length) - problem.psi(rule.points)
        mom = edge_monomials(xi, ell - 1).T @ (rule.weights * wt)
        np.add.at(out, disc.layout.element_dofs[k], disc.operators[k].EN[i].T @ mom)
    return out


def _apply_local(blk, u, epsilon, stab):
    U = u[blk.dofs]
    B = len(U)
    h2 = (blk.h**-2)[:, None, None]
    lin = -epsilon * (blk.K2 + h2 * blk.S)
    Hq = blk.hessians(U)
    det = det2(Hq)
    mom = np.swapaxes(blk.Mq, 1, 2) @ (blk.w * det)[:, :, None]
    nl = (np.swapaxes(blk.P0, 1, 2) @ mom)[..., 0]
    cb, _ = _b_stab_weight(blk, U, stab)
    SU = (blk.S @ U[:, :, None])[..., 0]
    return (lin @ U[:, :, None])[..., 0] + nl + cb[:, None] * SU


def nonlinear_form(disc, u, epsilon, stab=StabilizationSpec()):
    """Vector ``w -> A_QL,h(u, w)`` over all dofs."""
    out = np.zeros(disc.n_dofs)
    for blk in disc.blocks:
        disc._scatter_vec(blk, _apply_local(blk, u, epsilon, stab), out)
    return out


def assemble_residual(disc, u, problem, stab=StabilizationSpec(), rhs=None, free_only=True):
    """``F(u)(w) = A_QL,h(u, w) - RHS(w)``; restricted to free dofs by default."""
    rhs = assemble_rhs(disc, problem) if rhs is None else rhs
    F = nonlinear_form(disc, u, problem.epsilon, stab) - rhs
    return F[disc.layout.free] if free_only else F


def assemble_jacobian(disc, u, problem, stab=StabilizationSpec(), free_only=True):
    """Exact derivative of the residual at ``u`` (sparse, generally nonsymmetric)."""
    rows, cols, data = [], [], []
    eps = problem.epsilon
    n2 = disc.n2
    for blk in disc.blocks:
        U = u[blk.dofs]
        B = len(U)
        h2 = (blk.h**-2)[:, None, None]
        Hq = blk.hessians(U)
        C = cofactor(Hq)
        M2 = blk.Mq[:, :, :n2]
        P2 = blk.P2.reshape(blk.P2.shape[0], 4, n2, -1)
        MqT = np.swapaxes(blk.Mq, 1, 2)
        X = 0.0
        for r in range(2):
            for c in range(2):
                W = (blk.w * C[:, :, r, c])[:, :, None]
                X = X + (MqT @ (W * M2)) @ P2[:, 2 * r + c]               # (B, nl, N)
        J = np.swapaxes(blk.P0, 1, 2) @ X
        cb, gcb = _b_stab_weight(blk, U, stab)
        J = J - eps * (blk.K2 + h2 * blk.S) + cb[:, None, None] * blk.S
        if gcb is not None:
            SU = (blk.S @ U[:, :, None])[..., 0]
            J = J + SU[:, :, None] * gcb[:, None, :]
        disc._triplets(blk, J, rows, cols, data)
    return disc._to_sparse(rows, cols, data, free_only)


def linearized_system(disc, epsilon, rhs_full, lift, phi="identity", stab=StabilizationSpec(),
                      u=None):
    """Linear problem ``A_L,h(v, w) = rhs(w)`` with Dirichlet values taken from ``lift``."""
    A_full = assemble_linearized(disc, epsilon, phi, stab, u=u, free_only=False)
    free = disc.layout.free
    rhs = rhs_full - A_full @ lift
    A = A_full[free][:, free]
    return GlobalSystem(A.tocsr(), rhs[free], lift.copy(), free,
                        symmetric=(phi == "identity" or phi == "frozen" or callable(phi)))
