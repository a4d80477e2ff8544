"""Simplicial meshes of intervals and triangles.

A mesh stores vertex coordinates and positively oriented elements. Facets
(vertices in 1D, edges in 2D) are numbered globally and carry a fixed
orientation so that Raviart-Thomas degrees of freedom are reproducible:
edges run from the lower to the higher global vertex index and the global
normal is the tangent rotated clockwise; in 1D the facet normal is +1.

Local facet ``i`` of an element is the one opposite local vertex ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
import scipy.sparse as sp


class MeshError(ValueError):
    """Raised for invalid mesh input."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class SimplicialMesh:
    """Conforming simplicial mesh in dimension 1 or 2.

    Parameters
    ----------
    vertices : array_like, shape (nV, dim) or (nV,)
        Vertex coordinates.
    elements : array_like of int, shape (nT, dim + 1)
        Vertex indices per element. Negatively oriented elements are
        reordered so that every signed volume is positive.
    """

    def __init__(self, vertices, elements):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        elements = np.array(elements, dtype=np.int64, ndmin=2)
        dim = vertices.shape[1]
        if dim not in (1, 2):
            raise MeshError(f"unsupported dimension {dim}")
        if elements.shape[1] != dim + 1:
            raise MeshError("elements must have dim + 1 vertices")
        if elements.min() < 0 or elements.max() >= len(vertices):
            raise MeshError("element vertex index out of range")

        vol = self._signed_volumes(vertices, elements)
        flip = vol < 0
        if np.any(flip):
            elements[flip, 0], elements[flip, 1] = (
                elements[flip, 1].copy(), elements[flip, 0].copy())
            vol = np.abs(vol)
        if np.any(vol <= 0):
            raise MeshError("degenerate element with zero volume")

        self.dim = dim
        self.vertices = _frozen(vertices)
        self.elements = _frozen(elements)
        self.volumes = _frozen(vol)
        self._build_facets()

    @staticmethod
    def _signed_volumes(vertices, elements):
        p = vertices[elements]
        if p.shape[2] == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def _build_facets(self):
        nT = len(self.elements)
        if self.dim == 1:
            # facet i is the vertex opposite local vertex i
            element_facets = self.elements[:, ::-1].copy()
            facets = np.arange(len(self.vertices))[:, None]
        else:
            el = self.elements
            local = np.stack([el[:, [1, 2]], el[:, [2, 0]], el[:, [0, 1]]],
                             axis=1)
            local = np.sort(local, axis=2).reshape(-1, 2)
            facets, inverse = np.unique(local, axis=0, return_inverse=True)
            element_facets = inverse.reshape(nT, 3)

        counts = np.bincount(element_facets.ravel(),
                             minlength=len(facets))
        if np.any(counts > 2):
            raise MeshError("non-manifold facet shared by > 2 elements")
        used = counts > 0
        if self.dim == 1 and not np.all(used):
            raise MeshError("mesh has unused vertices")
        boundary_facet = counts == 1

        self.facets = _frozen(facets)
        self.element_facets = _frozen(element_facets)
        self.boundary_facet = _frozen(boundary_facet)

        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[facets[boundary_facet].ravel()] = True
        self.boundary_vertex = _frozen(bv)

        # orientation of the global facet normal relative to the outward one
        xf = self.facet_midpoints[element_facets]
        opp = self.vertices[self.elements]
        out = np.einsum("tkd,tkd->tk", xf - opp,
                        self.facet_normals[element_facets])
        self.facet_signs = _frozen(np.where(out > 0, 1.0, -1.0))

    def __repr__(self):
        return (f"SimplicialMesh(dim={self.dim}, nV={self.n_vertices}, "
                f"nT={self.n_elements})")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def edges(self):
        """Global edges (2D only), each ordered low to high index."""
        if self.dim != 2:
            raise AttributeError("edges are only defined for 2D meshes")
        return self.facets

    @property
    def boundary_edge(self):
        if self.dim != 2:
            raise AttributeError("edges are only defined for 2D meshes")
        return self.boundary_facet

    @cached_property
    def interior_vertices(self):
        return _frozen(np.flatnonzero(~self.boundary_vertex))

    @cached_property
    def centroids(self):
        return _frozen(self.vertices[self.elements].mean(axis=1))

    @cached_property
    def diameters(self):
        p = self.vertices[self.elements]
        if self.dim == 1:
            return _frozen(np.abs(p[:, 1, 0] - p[:, 0, 0]))
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1)
             for i, j in ((0, 1), (1, 2), (2, 0))]
        return _frozen(np.max(d, axis=0))

    @cached_property
    def shape_regularity(self):
        """kappa = max_T h_T^n / |T|."""
        return float(np.max(self.diameters ** self.dim / self.volumes))

    @cached_property
    def facet_measures(self):
        if self.dim == 1:
            return _frozen(np.ones(self.n_facets))
        p = self.vertices[self.facets]
        return _frozen(np.linalg.norm(p[:, 1] - p[:, 0], axis=1))

    @cached_property
    def facet_midpoints(self):
        return _frozen(self.vertices[self.facets].mean(axis=1))

    @cached_property
    def facet_normals(self):
        if self.dim == 1:
            return _frozen(np.ones((self.n_facets, 1)))
        p = self.vertices[self.facets]
        t = p[:, 1] - p[:, 0]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return _frozen(n / np.linalg.norm(n, axis=1)[:, None])

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the barycentric coordinates, shape (nT, n+1, n)."""
        p = self.vertices[self.elements]
        nT, k, d = p.shape
        m = np.ones((nT, k, k))
        m[:, 1:, :] = np.transpose(p, (0, 2, 1))
        inv = np.linalg.inv(m)
        return _frozen(inv[:, :, 1:])

    @cached_property
    def _affine_inverse(self):
        p = self.vertices[self.elements]
        nT, k, d = p.shape
        m = np.ones((nT, k, k))
        m[:, 1:, :] = np.transpose(p, (0, 2, 1))
        return np.linalg.inv(m)

    def barycentric(self, element_ids, x):
        """Barycentric coordinates of points ``x`` w.r.t. given elements.

        ``element_ids`` has shape (N,), ``x`` has shape (N, dim).
        """
        x = np.asarray(x, dtype=float).reshape(len(element_ids), self.dim)
        rhs = np.concatenate([np.ones((len(x), 1)), x], axis=1)
        return np.einsum("nij,nj->ni", self._affine_inverse[element_ids], rhs)

    @cached_property
    def vertex_element_matrix(self):
        """Sparse incidence, rows = vertices, columns = elements (CSR)."""
        nT = self.n_elements
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(nT), self.dim + 1)
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                          shape=(self.n_vertices, nT))
        a.sort_indices()
        return a

    @cached_property
    def patch_volumes(self):
        """|Omega_z| for every vertex."""
        return _frozen(self.vertex_element_matrix @ self.volumes)

    @cached_property
    def patch_centroids(self):
        """s_z for every vertex (volume weighted mean of centroids)."""
        a = self.vertex_element_matrix
        s = a @ (self.volumes[:, None] * self.centroids)
        return _frozen(s / self.patch_volumes[:, None])

    @cached_property
    def patch_diameters(self):
        """max h_T over the vertex patch."""
        a = self.vertex_element_matrix.tocoo()
        h = np.zeros(self.n_vertices)
        np.maximum.at(h, a.row, self.diameters[a.col])
        return _frozen(h)

    def measure(self):
        return float(self.volumes.sum())


@dataclass(frozen=True)
class VertexPatch:
    vertex: int
    elements: np.ndarray
    patch_volume: float
    centroid: np.ndarray


def vertex_patches(mesh):
    """Patches of all interior vertices, elements sorted by index."""
    a = mesh.vertex_element_matrix
    out = []
    for z in mesh.interior_vertices:
        els = a.indices[a.indptr[z]:a.indptr[z + 1]].copy()
        out.append(VertexPatch(int(z), els, float(mesh.patch_volumes[z]),
                               mesh.patch_centroids[z].copy()))
    return out


def element_patch(mesh, t):
    """Indices of all elements of the union of vertex patches of ``t``."""
    a = mesh.vertex_element_matrix
    els = [a.indices[a.indptr[z]:a.indptr[z + 1]] for z in mesh.elements[t]]
    return np.unique(np.concatenate(els))


def make_interval_mesh(a, b, breakpoints=()):
    """1D mesh of (a, b) with interior nodes ``breakpoints``."""
    pts = np.concatenate([[a], np.asarray(breakpoints, dtype=float), [b]])
    if not np.all(np.diff(pts) > 0):
        raise MeshError("breakpoints must be strictly increasing in (a, b)")
    n = len(pts) - 1
    elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return SimplicialMesh(pts[:, None], elements)


def make_square_mesh(lo, hi, cells_per_side, diagonal="single"):
    """Uniform triangulation of the rectangle [lo, hi].

    ``diagonal`` is ``"single"`` (each cell split along the lower-left to
    upper-right diagonal, 2 triangles per cell) or ``"criss-cross"`` (cell
    midpoint added, 4 triangles per cell).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = int(cells_per_side)
    if n < 1:
        raise MeshError("cells_per_side must be >= 1")
    if np.any(lo >= hi):
        raise MeshError("need lo < hi componentwise")
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    p00 = j * (n + 1) + i
    p10 = p00 + 1
    p01 = p00 + n + 1
    p11 = p01 + 1
    if diagonal == "single":
        tri = np.stack([np.stack([p00, p10, p11], 1),
                        np.stack([p00, p11, p01], 1)], axis=1).reshape(-1, 3)
    elif diagonal in ("criss-cross", "crisscross"):
        c = len(verts) + np.arange(n * n)
        centers = 0.5 * (verts[p00] + verts[p11])
        verts = np.concatenate([verts, centers])
        tri = np.stack([np.stack([p00, p10, c], 1),
                        np.stack([p10, p11, c], 1),
                        np.stack([p11, p01, c], 1),
                        np.stack([p01, p00, c], 1)], axis=1).reshape(-1, 3)
    else:
        raise MeshError(f"unknown diagonal pattern {diagonal!r}")
    return SimplicialMesh(verts, tri)


def refine_uniform(mesh):
    """Bisect every interval (1D) or red-refine every triangle (2D)."""
    nV = mesh.n_vertices
    el = mesh.elements
    if mesh.dim == 1:
        mids = mesh.centroids
        verts = np.concatenate([mesh.vertices, mids])
        m = nV + np.arange(mesh.n_elements)
        children = np.stack([np.stack([el[:, 0], m], 1),
                             np.stack([m, el[:, 1]], 1)], axis=1)
        return SimplicialMesh(verts, children.reshape(-1, 2))
    verts = np.concatenate([mesh.vertices, mesh.facet_midpoints])
    m = nV + mesh.element_facets  # m[:, i] is the midpoint opposite vertex i
    a, b, c = el[:, 0], el[:, 1], el[:, 2]
    ma, mb, mc = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([np.stack([a, mc, mb], 1),
                         np.stack([mc, b, ma], 1),
                         np.stack([mb, ma, c], 1),
                         np.stack([ma, mb, mc], 1)], axis=1)
    return SimplicialMesh(verts, children.reshape(-1, 3))


def refine(mesh, levels):
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def simplex_monomial_integral(alpha, volume=1.0):
    """Exact integral of prod(lambda_i ** alpha_i) over a simplex."""
    alpha = list(alpha)
    n = len(alpha) - 1
    num = factorial(n)
    for a in alpha:
        num *= factorial(a)
    return volume * num / factorial(n + sum(alpha))


def write_mesh(mesh, path):
    """Plain-text export: header ``dim nV nT``, vertices, then elements."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_elements}\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        for t in mesh.elements:
            fh.write(" ".join(str(int(i)) for i in t) + "\n")


def read_mesh(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise MeshError("bad mesh header")
        dim, nV, nT = (int(s) for s in header)
        verts = np.array([[float(s) for s in fh.readline().split()]
                          for _ in range(nV)]).reshape(nV, dim)
        els = np.array([[int(s) for s in fh.readline().split()]
                        for _ in range(nT)]).reshape(nT, dim + 1)
    return SimplicialMesh(verts, els)


def refine_newest_vertex(mesh):
    """Uniform newest-vertex bisection (2D): every element bisected twice.

    Element ``[z1, z2, z3]`` has refinement edge ``z1 z2`` and newest vertex
    ``z3``; children keep that convention, so repeated calls are
    conforming whenever the initial refinement edges are compatible.
    """
    if mesh.dim == 1:
        return refine_uniform(mesh)
    nV = mesh.n_vertices
    verts = np.concatenate([mesh.vertices, mesh.facet_midpoints])
    el = mesh.elements
    m = nV + mesh.element_facets
    z1, z2, z3 = el[:, 0], el[:, 1], el[:, 2]
    m23, m13, m12 = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([np.stack([z1, m12, m13], 1),
                         np.stack([m12, z3, m13], 1),
                         np.stack([m12, z2, m23], 1),
                         np.stack([z3, m12, m23], 1)], axis=1)
    return SimplicialMesh(verts, children.reshape(-1, 3))
