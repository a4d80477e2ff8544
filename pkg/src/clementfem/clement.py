"""Clement-type quasi-interpolators and H^{-1}-bounded projectors onto P0.

For every interior vertex ``z`` a set of weights ``alpha[z, T] >= 0`` over
the patch elements, summing to one, defines the P0 density
``phi_z = alpha[z, T] / |T|`` and the quasi-interpolator

    (J v)(z) = sum_T alpha[z, T] * mean_T(v).

``uniform`` weights (``|T| / |Omega_z|``) give the classical Clement
operator with zeroth-order moments. ``weighted`` weights additionally
satisfy ``sum_T alpha[z, T] s_T = z`` for the element centroids ``s_T``,
which makes ``J`` reproduce affine functions at the vertices.

The projector ``Q = J' + (1 - J)' B'`` only needs the moments of the load
against hats and element bubbles, so it applies to any H^{-1} functional.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls

from .elements import P0Field, P1Field
from .loads import H1DualLoad, load_moments
from .quadrature import integrate

CONTAIN_TOL = 1e-12


class WeightError(RuntimeError):
    pass


@dataclass
class ClementWeights:
    """Sparse ``alpha`` (rows: vertices, cols: elements); boundary rows empty."""
    matrix: sp.csr_matrix
    mode: str

    def alpha(self, z):
        row = self.matrix.getrow(z)
        return dict(zip(row.indices.tolist(), row.data.tolist()))

    def densities(self, mesh):
        """The P0 weight functions ``phi_z`` as a sparse (nV, nT) matrix."""
        return self.matrix @ sp.diags(1.0 / mesh.volumes)


def _assemble(mesh, rows, cols, vals, mode):
    a = sp.csr_matrix((vals, (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_elements))
    a.sort_indices()
    return ClementWeights(a, mode)


def uniform_weights(mesh):
    """Weights ``|T| / |Omega_z|`` of the classical Clement operator."""
    inc = mesh.vertex_element_matrix.tocoo()
    keep = ~mesh.boundary_vertex[inc.row]
    rows, cols = inc.row[keep], inc.col[keep]
    vals = mesh.volumes[cols] / mesh.patch_volumes[rows]
    return _assemble(mesh, rows, cols, vals, "uniform")


def _patch_lists(mesh):
    a = mesh.vertex_element_matrix
    return {int(z): a.indices[a.indptr[z]:a.indptr[z + 1]]
            for z in mesh.interior_vertices}


def _bary2(S, z):
    """Barycentric coordinates of ``z`` (G, 2) in triangles ``S`` (G, 3, 2)."""
    e1 = S[:, 1] - S[:, 0]
    e2 = S[:, 2] - S[:, 0]
    r = z - S[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.maximum(np.sum(e1 ** 2, 1), np.sum(e2 ** 2, 1))
    ok = np.abs(det) > 1e-12 * scale
    det = np.where(ok, det, 1.0)
    l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
    lam = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    return lam, ok


def _nnls_weights(S, z, h):
    A = np.vstack([S.T, np.ones(len(S))])
    b = np.concatenate([z, [1.0]])
    alpha, _ = nnls(A, b)
    alpha /= alpha.sum()
    res = np.linalg.norm(alpha @ S - z)
    if res > 1e-10 * h:
        raise WeightError(f"no convex combination found (residual {res:.2e})")
    return alpha


def solve_convex_weights(mesh):
    """Deterministic solution of ``sum alpha s_T = z``, ``sum alpha = 1``,
    ``alpha >= 0`` for every interior vertex.

    1D uses the unique closed form. In 2D the (n+1)-subsets of the patch are
    scanned in lexicographic order and the first centroid triangle
    containing ``z`` supplies the weights. Patch elements are ranked by
    their sorted vertex triples, so the choice does not depend on the
    storage order of the elements.
    """
    rows, cols, vals = [], [], []
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        patches = _patch_lists(mesh)
        for z, els in patches.items():
            ends = mesh.elements[els]
            other = np.where(ends[:, 0] == z, ends[:, 1], ends[:, 0])
            left = int(np.argmin(x[other]))
            right = 1 - left
            zm, zp = x[other[left]], x[other[right]]
            a = np.empty(2)
            a[left] = (zp - x[z]) / (zp - zm)
            a[right] = (x[z] - zm) / (zp - zm)
            rows += [z, z]
            cols += els.tolist()
            vals += a.tolist()
        return _assemble(mesh, rows, cols, vals, "weighted")

    patches = _patch_lists(mesh)
    keys = np.sort(mesh.elements, axis=1)
    for z, els in patches.items():
        order = np.lexsort(keys[els].T[::-1])
        patches[z] = els[order]
    by_size = {}
    for z, els in patches.items():
        by_size.setdefault(len(els), []).append(z)
    cent = mesh.centroids
    for m, zs in sorted(by_size.items()):
        zs = np.array(zs)
        E = np.stack([patches[z] for z in zs])          # (G, m), ranked
        S = cent[E]                                     # (G, m, 2)
        Z = mesh.vertices[zs]
        found = np.zeros(len(zs), dtype=bool)
        alpha = np.zeros((len(zs), m))
        for combo in combinations(range(m), 3):
            todo = ~found
            if not todo.any():
                break
            lam, ok = _bary2(S[todo][:, combo], Z[todo])
            good = ok & np.all(lam >= -CONTAIN_TOL, axis=1)
            idx = np.flatnonzero(todo)[good]
            lam = np.clip(lam[good], 0.0, None)
            lam /= lam.sum(axis=1, keepdims=True)
            for j, c in enumerate(combo):
                alpha[idx, c] = lam[:, j]
            found[idx] = True
        for g in np.flatnonzero(~found):
            alpha[g] = _nnls_weights(S[g], Z[g], mesh.patch_diameters[zs[g]])
        rows.append(np.repeat(zs, m))
        cols.append(E.ravel())
        vals.append(alpha.ravel())
    if rows:
        rows, cols, vals = (np.concatenate(rows), np.concatenate(cols),
                            np.concatenate(vals))
    w = _assemble(mesh, rows, cols, vals, "weighted")
    w.matrix.eliminate_zeros()
    return w


def make_weights(mesh, projector):
    if projector in ("clement", "uniform"):
        return uniform_weights(mesh)
    if projector in ("weighted-clement", "weighted"):
        return solve_convex_weights(mesh)
    raise ValueError(f"unknown projector {projector!r}")


def convex_residuals(mesh, weights):
    """``|sum alpha s_T - z|`` and ``|sum alpha - 1|`` per interior vertex."""
    a = weights.matrix
    iv = mesh.interior_vertices
    pos = (a @ mesh.centroids)[iv] - mesh.vertices[iv]
    return (np.linalg.norm(pos, axis=1),
            np.abs(np.asarray(a.sum(axis=1)).ravel()[iv] - 1.0))


def l2_project_p0(fn, mesh, degree=10, singular=()):
    """Element means of a function."""
    return P0Field(integrate(mesh, fn, degree, singular) / mesh.volumes)


def _means(v, mesh, degree=10, singular=()):
    if isinstance(v, P0Field):
        return v.values
    if callable(v):
        return l2_project_p0(v, mesh, degree, singular).values
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_elements,):
        raise ValueError("expected one value per element")
    return v


def clement_interpolate(weights, v, mesh, degree=10, singular=()):
    """Apply the quasi-interpolator to a P0 field or an integrable function."""
    vals = weights.matrix @ _means(v, mesh, degree, singular)
    vals[mesh.boundary_vertex] = 0.0
    return P1Field(vals, homogeneous_bc=True)


def bubble_lift(v, mesh):
    """Coefficients of ``B v = sum_T <v, chi_T> eta_b,T``."""
    return mesh.volumes * _means(v, mesh)


def project_moments(hats, bubbles, mesh, weights):
    """Element values of ``Q f`` from ``<f, eta_z>`` and ``<f, eta_b,T>``."""
    n = mesh.dim
    inc = mesh.vertex_element_matrix
    c = hats - inc @ (bubbles * mesh.volumes) / (n + 1)
    c[mesh.boundary_vertex] = 0.0
    return P0Field(bubbles + (weights.matrix.T @ c) / mesh.volumes)


def project_load(load, mesh, weights, degree=None):
    """``Q f = J' f + (1 - J)' B' f`` for an H^{-1} load."""
    hats, bubbles, _ = load_moments(load, mesh, degree)
    return project_moments(hats, bubbles, mesh, weights)


def project_p0(values, mesh, weights):
    """``Q`` applied to a P0 function (moments computed exactly)."""
    values = np.asarray(values, dtype=float)
    n = mesh.dim
    hats = mesh.vertex_element_matrix @ (values * mesh.volumes) / (n + 1)
    return project_moments(hats, values, mesh, weights)


def regularize(load, mesh, projector, degree=None):
    """The P0 right-hand side of the (modified) schemes.

    ``projector="none"`` is the element mean of an L^2 load.
    """
    if projector == "none":
        if not isinstance(load, H1DualLoad) or not load.has_l2:
            raise ValueError("projector 'none' needs an L^2 load")
        _, _, means = load_moments(load, mesh, degree)
        return P0Field(means / mesh.volumes)
    return project_load(load, mesh, make_weights(mesh, projector), degree)
