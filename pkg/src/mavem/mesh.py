"""Polygonal meshes of the unit square.

Two generators are provided: uniform axis-aligned quadrilaterals and Voronoi
tessellations clipped to the square and relaxed by Lloyd iterations.  Every
mesh is validated on construction (area partition, edge adjacency, normals).
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import Delaunay, cKDTree
from scipy.spatial import QhullError

from .poly import is_convex, polygon_area_centroid

logger = logging.getLogger(__name__)

DEDUP_TOL = 1e-12


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Element:
    index: int
    vertex_indices: tuple
    centroid: np.ndarray
    diameter: float
    area: float
    edge_indices: tuple
    # +1 where this element is K+ of the local edge (edge runs CCW for us)
    edge_signs: tuple

    @property
    def n_edges(self):
        return len(self.vertex_indices)


@dataclass(frozen=True)
class Edge:
    index: int
    endpoint_indices: tuple
    length: float
    normal: np.ndarray
    tangent: np.ndarray
    adjacent_elements: tuple
    is_boundary: bool


@dataclass(frozen=True)
class RegularityReport:
    rho_min: float
    max_edge_count: int
    star_shaped_ok: bool
    star_radius_ratio: float
    rho_threshold: float = 0.0
    passed: bool = True


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    elements: tuple
    edges: tuple
    h_max: float
    boundary_vertex: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    def element_polygon(self, k):
        return self.vertices[list(self.elements[k].vertex_indices)]

    def edge_midpoint(self, e):
        a, b = self.edges[e].endpoint_indices
        return (self.vertices[a] + self.vertices[b]) / 2.0

    @classmethod
    def from_polygons(cls, vertices, polygons, check=True):
        """Build topology and geometry from vertex coordinates and CCW index lists."""
        vertices = np.array(vertices, dtype=float)
        vertices.setflags(write=False)
        polygons = [tuple(int(i) for i in p) for p in polygons]

        edge_map = {}
        edge_ends = []
        edge_adj = []
        elem_edges = []
        elem_signs = []
        for k, poly in enumerate(polygons):
            if len(poly) < 3:
                raise MeshError(f"element {k} has fewer than 3 vertices")
            ids, signs = [], []
            for i in range(len(poly)):
                a, b = poly[i], poly[(i + 1) % len(poly)]
                key = (a, b) if a < b else (b, a)
                e = edge_map.get(key)
                if e is None:
                    e = len(edge_ends)
                    edge_map[key] = e
                    edge_ends.append((a, b))
                    edge_adj.append([k])
                    signs.append(1)
                else:
                    if edge_ends[e] != (b, a):
                        raise MeshError(f"edge {key} has inconsistent orientation in element {k}")
                    edge_adj[e].append(k)
                    signs.append(-1)
                ids.append(e)
            elem_edges.append(tuple(ids))
            elem_signs.append(tuple(signs))

        elements = []
        for k, poly in enumerate(polygons):
            pts = vertices[list(poly)]
            area, cen = polygon_area_centroid(pts)
            d = pts[:, None, :] - pts[None, :, :]
            diam = float(np.sqrt((d**2).sum(-1)).max())
            cen.setflags(write=False)
            elements.append(Element(k, poly, cen, diam, float(area), elem_edges[k], elem_signs[k]))

        edges = []
        bnd_vertex = np.zeros(len(vertices), dtype=bool)
        for e, (a, b) in enumerate(edge_ends):
            vec = vertices[b] - vertices[a]
            length = float(np.hypot(*vec))
            t = vec / length
            n = np.array([t[1], -t[0]])
            t.setflags(write=False)
            n.setflags(write=False)
            adj = tuple(edge_adj[e])
            if len(adj) > 2:
                raise MeshError(f"edge {e} is shared by {len(adj)} elements")
            is_b = len(adj) == 1
            if is_b:
                bnd_vertex[[a, b]] = True
            edges.append(Edge(e, (a, b), length, n, t, adj, is_b))
        bnd_vertex.setflags(write=False)

        h_max = max(el.diameter for el in elements)
        mesh = cls(vertices, tuple(elements), tuple(edges), h_max, bnd_vertex)
        if check:
            validate_mesh(mesh)
        return mesh


def validate_mesh(mesh, tol=1e-12):
    """Raise :class:`MeshError` unless the mesh is a valid partition of the unit square."""
    for el in mesh.elements:
        pts = mesh.element_polygon(el.index)
        if el.area <= 0:
            raise MeshError(f"element {el.index} is not counter-clockwise (area {el.area})")
        if not is_convex(pts, tol=1e-10):
            raise MeshError(f"element {el.index} is not convex")
    total = math.fsum(el.area for el in mesh.elements)
    if abs(total - 1.0) > tol:
        raise MeshError(f"element areas sum to {total!r}, not 1")
    for ed in mesh.edges:
        mid = mesh.edge_midpoint(ed.index)
        kp = mesh.elements[ed.adjacent_elements[0]]
        if np.dot(ed.normal, mid - kp.centroid) <= 0:
            raise MeshError(f"edge {ed.index} normal does not point out of K+")
        if ed.is_boundary:
            on_side = (np.isclose(mid[0], 0.0, atol=1e-12) or np.isclose(mid[0], 1.0, atol=1e-12)
                       or np.isclose(mid[1], 0.0, atol=1e-12) or np.isclose(mid[1], 1.0, atol=1e-12))
            if not on_side:
                raise MeshError(f"boundary edge {ed.index} is not on the boundary of the unit square")


def build_uniform_quad_mesh(n):
    """``n x n`` axis-aligned squares tiling the unit square."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(x, x)
    verts = np.column_stack([xx.ravel(), yy.ravel()])
    polys = []
    for j in range(n):
        for i in range(n):
            v0 = j * (n + 1) + i
            polys.append((v0, v0 + 1, v0 + n + 2, v0 + n + 1))
    return Mesh.from_polygons(verts, polys)


# --------------------------------------------------------------------------
# Voronoi


_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _clip(poly, normal, offset):
    """Sutherland-Hodgman clip of a convex polygon to ``normal . x <= offset``."""
    if len(poly) == 0:
        return poly
    s = poly @ normal - offset
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        pi, pj, si, sj = poly[i], poly[j], s[i], s[j]
        if si <= 0:
            out.append(pi)
        if (si < 0 < sj) or (sj < 0 < si):
            t = si / (si - sj)
            out.append(pi + t * (pj - pi))
    return np.array(out) if out else np.zeros((0, 2))


def _neighbours(seeds):
    n = len(seeds)
    if n < 5:
        return [[j for j in range(n) if j != i] for i in range(n)]
    try:
        tri = Delaunay(seeds)
    except QhullError:
        return [[j for j in range(n) if j != i] for i in range(n)]
    indptr, indices = tri.vertex_neighbor_vertices
    return [list(indices[indptr[i]:indptr[i + 1]]) for i in range(n)]


def _dedupe_ring(poly, tol):
    if len(poly) == 0:
        return poly
    keep = []
    for i in range(len(poly)):
        if np.linalg.norm(poly[i] - poly[(i + 1) % len(poly)]) > tol:
            keep.append(i)
    return poly[keep]


def voronoi_cells(seeds):
    """Voronoi cells of ``seeds`` clipped to the unit square, as CCW coordinate arrays."""
    seeds = np.asarray(seeds, dtype=float)
    nbrs = _neighbours(seeds)
    cells = []
    for i, s in enumerate(seeds):
        poly = _SQUARE.copy()
        for j in nbrs[i]:
            d = seeds[j] - s
            # keep points closer to s than to seeds[j]
            poly = _clip(poly, d, d @ (seeds[j] + s) / 2.0)
        cells.append(_dedupe_ring(poly, DEDUP_TOL))
    return cells


def _separate_seeds(seeds, rng, max_tries=10):
    for _ in range(max_tries):
        pairs = cKDTree(seeds).query_pairs(1e-10, output_type="ndarray")
        if len(pairs) == 0:
            return seeds
        seeds = seeds.copy()
        bad = np.unique(pairs[:, 1])
        seeds[bad] = np.clip(seeds[bad] + rng.uniform(-1e-6, 1e-6, size=(len(bad), 2)), 0.0, 1.0)
    raise MeshError("could not separate coincident Voronoi seeds")


def lloyd_relax(seeds, iterations, tol=1e-8):
    """Move each seed to the centroid of its clipped cell until the motion is below ``tol``."""
    seeds = np.array(seeds, dtype=float)
    for it in range(iterations):
        cells = voronoi_cells(seeds)
        new = np.array([polygon_area_centroid(c)[1] for c in cells])
        move = np.abs(new - seeds).max()
        seeds = new
        if move < tol:
            logger.debug("Lloyd converged after %d iterations", it + 1)
            break
    return seeds


def mesh_from_cells(cells, tol=DEDUP_TOL):
    """Merge coincident vertices of a list of CCW polygons into a :class:`Mesh`."""
    coords = np.concatenate(cells)
    coords = np.where(np.abs(coords) < tol, 0.0, coords)
    coords = np.where(np.abs(coords - 1.0) < tol, 1.0, coords)
    n = len(coords)
    pairs = cKDTree(coords).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) \
        else coo_matrix((n, n))
    _, labels = connected_components(graph, directed=False)
    # first occurrence of each cluster defines the vertex order
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    new_id = np.empty(len(order), dtype=int)
    new_id[order] = np.arange(len(order))
    verts = coords[first[order]]
    polys = []
    start = 0
    for c in cells:
        ids = new_id[labels[start:start + len(c)]]
        start += len(c)
        ring = [int(v) for i, v in enumerate(ids) if v != ids[i - 1]]
        polys.append(ring)
    return Mesh.from_polygons(verts, polys)


def voronoi_mesh_from_seeds(seeds, lloyd_iterations=0, rng=None):
    """Voronoi mesh of given seeds; coincident seeds are first pulled apart slightly."""
    rng = np.random.default_rng(0) if rng is None else rng
    seeds = _separate_seeds(np.asarray(seeds, dtype=float), rng)
    if lloyd_iterations:
        seeds = lloyd_relax(seeds, lloyd_iterations)
    return mesh_from_cells(voronoi_cells(seeds))


def build_voronoi_mesh(n_cells, rng_seed=0, lloyd_iterations=100):
    """Lloyd-relaxed Voronoi mesh of ``n_cells`` random seeds in the unit square."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return voronoi_mesh_from_seeds(rng.uniform(0.0, 1.0, size=(n_cells, 2)), lloyd_iterations,
                                   rng)


# --------------------------------------------------------------------------
# regularity


def check_mesh_regularity(mesh, rho_threshold=0.1, star_threshold=0.0):
    """Measure the shape-regularity constants of a mesh.

    ``rho_min`` is the smallest ratio h_e / h_K, and ``star_radius_ratio`` the
    smallest ratio of the centroid-centred inscribed radius to h_K.
    """
    rho_min = np.inf
    star_ratio = np.inf
    convex = True
    max_edges = 0
    for el in mesh.elements:
        pts = mesh.element_polygon(el.index)
        max_edges = max(max_edges, el.n_edges)
        convex &= is_convex(pts, tol=1e-10)
        for e in el.edge_indices:
            rho_min = min(rho_min, mesh.edges[e].length / el.diameter)
        d = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(d[:, 0], d[:, 1])
        rel = el.centroid - pts
        dist = np.abs(d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]) / lengths
        star_ratio = min(star_ratio, dist.min() / el.diameter)
    star_ok = bool(convex and star_ratio > star_threshold)
    passed = bool(rho_min >= rho_threshold and star_ok)
    return RegularityReport(float(rho_min), int(max_edges), star_ok, float(star_ratio),
                            rho_threshold, passed)


# --------------------------------------------------------------------------
# text format: "NV NE", NV lines "x y", NE lines "k i1 ... ik" (0-based, CCW)


def write_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for el in mesh.elements:
            fh.write(" ".join(str(i) for i in (el.n_edges, *el.vertex_indices)) + "\n")


def read_mesh(path):
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip()]
    try:
        nv, ne = int(tokens[0][0]), int(tokens[0][1])
        verts = np.array([[float(t[0]), float(t[1])] for t in tokens[1:1 + nv]])
        polys = []
        for t in tokens[1 + nv:1 + nv + ne]:
            k = int(t[0])
            if len(t) != k + 1:
                raise MeshError(f"element line {t!r} does not list {k} vertices")
            polys.append([int(i) for i in t[1:]])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(verts) != nv or len(polys) != ne:
        raise MeshError(f"mesh file {path} is truncated")
    return Mesh.from_polygons(verts, polys)
