"""Lowest-order finite element bases on simplicial meshes.

* P0: one value per element.
* P1: nodal hat functions ``eta_z`` (barycentric coordinates).
* RT0: one degree of freedom per facet, ``phi_F = s |F| / (n |T|) (x - p_F)``
  on each adjacent element, where ``p_F`` is the vertex opposite ``F`` and
  ``s`` the sign of the global facet normal relative to the outward normal
  of the element. The normal trace of ``phi_F`` on ``F`` is one. In 1D the
  facets are vertices and RT0 coincides with continuous P1.
* Element bubbles normalized to unit integral, and the dual basis
  ``psi_z`` bi-orthogonal to the interior hats.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

BARY_TOL = 1e-12


class BasisError(ValueError):
    pass


def _local_index(mesh, z, t):
    hit = np.flatnonzero(mesh.elements[t] == z)
    return int(hit[0]) if len(hit) else None


def _bary_checked(mesh, t, x):
    lam = mesh.barycentric(np.array([t]), np.atleast_2d(x))[0]
    if np.any(lam < -BARY_TOL):
        raise BasisError(f"point {x} lies outside element {t}")
    return lam


def bubble_constant(dim):
    """c_T * |T| such that c_T * prod(lambda_i) has unit integral."""
    return factorial(2 * dim + 1) / factorial(dim)


def hat_basis_eval(mesh, z, t, x):
    """Value of the hat function of vertex ``z`` at ``x`` in element ``t``."""
    lam = _bary_checked(mesh, t, x)
    i = _local_index(mesh, z, t)
    return 0.0 if i is None else float(lam[i])


def dual_basis_eval(mesh, z, t, x):
    """Dual basis ``psi_z = ((n+1)(n+2) eta_z - (n+1)) / |Omega_z|``."""
    if mesh.boundary_vertex[z]:
        raise BasisError(f"vertex {z} is not interior")
    lam = _bary_checked(mesh, t, x)
    i = _local_index(mesh, z, t)
    if i is None:
        return 0.0
    n = mesh.dim
    return float(((n + 1) * (n + 2) * lam[i] - (n + 1))
                 / mesh.patch_volumes[z])


def bubble_basis_eval(mesh, t, x):
    lam = _bary_checked(mesh, t, x)
    return float(bubble_constant(mesh.dim) / mesh.volumes[t] * np.prod(lam))


def rt0_basis_eval(mesh, facet, t, x):
    """Value (vector) of the RT0 basis function of ``facet`` on element ``t``."""
    _bary_checked(mesh, t, x)
    loc = np.flatnonzero(mesh.element_facets[t] == facet)
    if len(loc) == 0:
        return np.zeros(mesh.dim)
    k = int(loc[0])
    return rt0_values(mesh, np.array([t]), np.atleast_2d(x))[0, k]


# -- vectorized kernels ------------------------------------------------------

def rt0_coefficients(mesh):
    """s |F| / (n |T|) per element and local facet, shape (nT, n+1)."""
    fm = mesh.facet_measures[mesh.element_facets]
    return mesh.facet_signs * fm / (mesh.dim * mesh.volumes[:, None])


def rt0_values(mesh, elements, x):
    """Local RT0 basis values at points ``x``; shape (N, n+1, dim)."""
    p = mesh.vertices[mesh.elements[elements]]          # (N, n+1, dim)
    c = rt0_coefficients(mesh)[elements]                # (N, n+1)
    return c[:, :, None] * (np.asarray(x)[:, None, :] - p)


def rt0_divergence(mesh):
    """Constant divergence of local RT0 functions, shape (nT, n+1)."""
    return mesh.dim * rt0_coefficients(mesh)


def rt0_means(mesh):
    """Element averages of local RT0 functions, shape (nT, n+1, dim)."""
    p = mesh.vertices[mesh.elements]
    return rt0_coefficients(mesh)[:, :, None] * (mesh.centroids[:, None, :] - p)


def bubble_values(mesh, elements, lam):
    c = bubble_constant(mesh.dim) / mesh.volumes[elements]
    return c * np.prod(lam, axis=1)


def bubble_gradients(mesh, elements, lam):
    """Gradient of the normalized bubble; shape (N, dim)."""
    k = mesh.dim + 1
    c = bubble_constant(mesh.dim) / mesh.volumes[elements]
    grads = mesh.barycentric_gradients[elements]        # (N, n+1, dim)
    out = np.zeros((len(elements), mesh.dim))
    for i in range(k):
        others = np.prod(np.delete(lam, i, axis=1), axis=1)
        out += others[:, None] * grads[:, i, :]
    return c[:, None] * out


# -- discrete fields ---------------------------------------------------------

@dataclass
class P0Field:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def evaluate(self, mesh, elements, lam=None):
        return self.values[elements]


@dataclass
class P1Field:
    values: np.ndarray
    homogeneous_bc: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def check(self, mesh):
        if self.homogeneous_bc and np.any(
                self.values[mesh.boundary_vertex] != 0.0):
            raise BasisError("nonzero boundary value in homogeneous field")

    def evaluate(self, mesh, elements, lam):
        return np.einsum("ni,ni->n", self.values[mesh.elements[elements]], lam)

    def gradient(self, mesh, elements=None):
        """Elementwise constant gradients, shape (nT, dim) or (N, dim)."""
        g = np.einsum("ti,tid->td", self.values[mesh.elements],
                      mesh.barycentric_gradients)
        return g if elements is None else g[elements]


@dataclass
class RT0Field:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def local(self, mesh, elements=None):
        v = self.values[mesh.element_facets]
        return v if elements is None else v[elements]

    def evaluate(self, mesh, elements, x):
        phi = rt0_values(mesh, elements, x)
        return np.einsum("nk,nkd->nd", self.local(mesh, elements), phi)

    def divergence(self, mesh):
        """Elementwise constant divergence, shape (nT,)."""
        return np.sum(self.local(mesh) * rt0_divergence(mesh), axis=1)

    def means(self, mesh):
        return np.einsum("tk,tkd->td", self.local(mesh), rt0_means(mesh))


def hat_gradients(mesh):
    return mesh.barycentric_gradients
