"""Assembly and solution of the lowest-order mixed FEM and FOSLS.

Both schemes take the load only through a P0 right-hand side ``r``: the
element means of ``f`` for the standard schemes, or a projection ``Q f``
for the regularized ones.

Mixed (RT0 x P0)::

    [ M  B^T ] [sigma]   [      0     ]
    [ B   0  ] [  u  ] = [ -|T| r_T   ]

with ``M`` the RT0 mass matrix and ``B[T, F] = int_T div phi_F``.

FOSLS (RT0 x P1_0) minimizes ``|div tau + r|^2 + |grad v - tau|^2``; its
normal equations are

    [ D + M   -C ] [sigma]   [ -B^T r ]
    [ -C^T     K ] [  u  ] = [    0   ]

with ``D`` the div-div matrix, ``C[F, z] = <phi_F, grad eta_z>`` and ``K``
the P1 stiffness matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .elements import (P0Field, P1Field, RT0Field, rt0_coefficients,
                       rt0_divergence, rt0_means)

log = logging.getLogger(__name__)

SOLVER_RTOL = 1e-12


class SolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class MixedSolution:
    u: P0Field
    sigma: RT0Field
    rhs_p0: P0Field


@dataclass
class FoslsSolution:
    u: P1Field
    sigma: RT0Field
    rhs_p0: P0Field


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric_definite: bool = False


def _scatter(rows, cols, vals, shape):
    a = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=shape).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def rt0_mass_local(mesh):
    """Exact local RT0 mass matrices, shape (nT, n+1, n+1)."""
    n = mesh.dim
    p = mesh.vertices[mesh.elements]                    # (nT, k, d)
    s = mesh.centroids[:, None, :]
    c = rt0_coefficients(mesh)
    ds = s - p                                          # s - p_i
    second = np.einsum("tkd,tkd->t", p - s, p - s) / ((n + 1) * (n + 2))
    gram = np.einsum("tid,tjd->tij", ds, ds) + second[:, None, None]
    return mesh.volumes[:, None, None] * c[:, :, None] * c[:, None, :] * gram


def rt0_mass_matrix(mesh):
    loc = rt0_mass_local(mesh)
    f = mesh.element_facets
    k = mesh.dim + 1
    rows = np.repeat(f, k, axis=1)
    cols = np.tile(f, (1, k))
    return _scatter(rows, cols, loc.reshape(len(f), -1), (mesh.n_facets,) * 2)


def divergence_matrix(mesh):
    """``B[T, F] = int_T div phi_F``; shape (nT, nF)."""
    vals = mesh.volumes[:, None] * rt0_divergence(mesh)
    rows = np.repeat(np.arange(mesh.n_elements)[:, None], mesh.dim + 1, 1)
    return _scatter(rows, mesh.element_facets, vals,
                    (mesh.n_elements, mesh.n_facets))


def stiffness_matrix(mesh):
    g = mesh.barycentric_gradients
    loc = mesh.volumes[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    el = mesh.elements
    k = mesh.dim + 1
    return _scatter(np.repeat(el, k, 1), np.tile(el, (1, k)),
                    loc.reshape(len(el), -1), (mesh.n_vertices,) * 2)


def coupling_matrix(mesh):
    """``C[F, z] = <phi_F, grad eta_z>``; shape (nF, nV)."""
    loc = mesh.volumes[:, None, None] * np.einsum(
        "tid,tjd->tij", rt0_means(mesh), mesh.barycentric_gradients)
    k = mesh.dim + 1
    return _scatter(np.repeat(mesh.element_facets, k, 1),
                    np.tile(mesh.elements, (1, k)),
                    loc.reshape(mesh.n_elements, -1),
                    (mesh.n_facets, mesh.n_vertices))


def _rhs_values(rhs, mesh):
    r = rhs.values if isinstance(rhs, P0Field) else np.asarray(rhs, float)
    if r.shape != (mesh.n_elements,):
        raise ValueError("right-hand side must be a P0 field on the mesh")
    return r


def assemble_mixed(mesh, rhs):
    """Blocks ``(M, B)`` and the full saddle-point system."""
    r = _rhs_values(rhs, mesh)
    M = rt0_mass_matrix(mesh)
    B = divergence_matrix(mesh)
    A = sp.bmat([[M, B.T], [B, None]], format="csr")
    b = np.concatenate([np.zeros(mesh.n_facets), -mesh.volumes * r])
    return M, B, LinearSystem(A, b, symmetric_definite=False)


def assemble_fosls(mesh, rhs):
    """Normal equations of the least-squares functional."""
    r = _rhs_values(rhs, mesh)
    M = rt0_mass_matrix(mesh)
    B = divergence_matrix(mesh)
    D = B.T @ sp.diags(1.0 / mesh.volumes) @ B
    iv = mesh.interior_vertices
    C = coupling_matrix(mesh)[:, iv]
    K = stiffness_matrix(mesh)[iv][:, iv]
    A = sp.bmat([[D + M, -C], [-C.T, K]], format="csr")
    b = np.concatenate([-(B.T @ r), np.zeros(len(iv))])
    return LinearSystem(A, b, symmetric_definite=True)


def solve(system, rtol=SOLVER_RTOL, max_refine=5):
    """Sparse LU with iterative refinement; residual-checked."""
    if isinstance(system, LinearSystem):
        A, b = system.matrix, system.rhs
    else:
        A, b = system
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(A.shape[1])
    try:
        lu = splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}", float("inf")) from None
    x = lu.solve(b)
    res = np.linalg.norm(b - A @ x) / nb
    steps = 0
    while res > rtol and steps < max_refine:
        x += lu.solve(b - A @ x)
        res = np.linalg.norm(b - A @ x) / nb
        steps += 1
    if not np.isfinite(res) or res > rtol:
        raise SolverError("linear solve did not reach tolerance", res)
    log.debug("solved n=%d, residual %.2e after %d refinements",
              A.shape[0], res, steps)
    return x


def solve_mixed(mesh, rhs):
    r = _rhs_values(rhs, mesh)
    _, _, system = assemble_mixed(mesh, r)
    x = solve(system)
    nF = mesh.n_facets
    return MixedSolution(P0Field(x[nF:]), RT0Field(x[:nF]), P0Field(r))


def solve_fosls(mesh, rhs):
    r = _rhs_values(rhs, mesh)
    system = assemble_fosls(mesh, r)
    x = solve(system)
    nF = mesh.n_facets
    u = np.zeros(mesh.n_vertices)
    u[mesh.interior_vertices] = x[nF:]
    return FoslsSolution(P1Field(u, homogeneous_bc=True), RT0Field(x[:nF]),
                         P0Field(r))


def fosls_functional(mesh, u, sigma, rhs):
    """``|div sigma + r|^2 + |grad u - sigma|^2``, evaluated exactly."""
    r = _rhs_values(rhs, mesh)
    div = sigma.divergence(mesh)
    first = np.sum(mesh.volumes * (div + r) ** 2)
    # grad u - sigma is affine per element: use the local mass matrices
    gu = u.gradient(mesh)
    loc = sigma.local(mesh)
    mass = rt0_mass_local(mesh)
    ss = np.einsum("ti,tij,tj->t", loc, mass, loc)
    us = np.einsum("td,td->t", gu, sigma.means(mesh)) * mesh.volumes
    uu = np.einsum("td,td->t", gu, gu) * mesh.volumes
    return float(first + np.sum(ss - 2 * us + uu))


def write_system(path, matrix):
    """Coordinate text format: ``row col value`` per line, 0-based."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
