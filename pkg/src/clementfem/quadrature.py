"""Quadrature on intervals and triangles.

Rules on the reference simplex are collapsed (Duffy) tensor products of
Gauss-Jacobi and Gauss-Legendre points, so arbitrary degrees are available
with positive weights and interior points. Points are stored in barycentric
coordinates and weights sum to one; the caller scales by ``|T|``.

Integrands that are singular along a line (a point in 1D) are handled by
:func:`iter_element_quadrature`: elements touching the line are cut into
sub-simplices that meet the line only along a facet or at a vertex, and
each piece gets a rule graded towards that facet or vertex.

Integrands with features much narrower than an element (sharp layers) take
a ``resolution`` length: larger elements use a composite rule on a uniformly
subdivided reference simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import simplex_monomial_integral

MAX_DEGREE = 20


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int
    points: np.ndarray   # barycentric, shape (nq, dim + 1)
    weights: np.ndarray  # shape (nq,), sum to 1

    def __len__(self):
        return len(self.weights)


def _gauss01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _jacobi01(n, beta):
    # weight t**beta on [0, 1]
    x, w = roots_jacobi(n, 0.0, beta)
    return 0.5 * (x + 1.0), w / 2.0 ** (beta + 1)


def _monomial_defect(dim, degree, points, weights):
    worst = 0.0
    for alpha in product(range(degree + 1), repeat=dim + 1):
        if sum(alpha) > degree:
            continue
        exact = simplex_monomial_integral(alpha)
        approx = np.sum(weights * np.prod(points ** np.array(alpha), axis=1))
        worst = max(worst, abs(approx - exact) / exact)
    return worst


@lru_cache(maxsize=None)
def make_quadrature(dim, degree):
    """Rule on the reference simplex exact for polynomials up to ``degree``."""
    if dim not in (1, 2):
        raise QuadratureError(f"unsupported dimension {dim}")
    if not 1 <= degree <= MAX_DEGREE:
        raise QuadratureError(f"degree must lie in [1, {MAX_DEGREE}]")
    n = degree // 2 + 1
    if dim == 1:
        t, w = _gauss01(n)
        pts = np.stack([1.0 - t, t], axis=1)
        wts = w
    else:
        r, wr = _jacobi01(n, 1.0)
        s, ws = _gauss01(n)
        R, S = np.meshgrid(r, s, indexing="ij")
        R, S = R.ravel(), S.ravel()
        pts = np.stack([1.0 - R, R * (1.0 - S), R * S], axis=1)
        wts = 2.0 * np.outer(wr, ws).ravel()
    defect = _monomial_defect(dim, degree, pts, wts)
    if defect > 1e-12:
        raise QuadratureError(
            f"rule of degree {degree} failed exactness check ({defect:.1e})")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, degree, pts, wts)


@lru_cache(maxsize=None)
def graded_rule(dim, degree, toward, grading):
    """Reference rule clustered at vertex 0 (``toward="vertex"``) or at the
    facet opposite vertex 0 (``toward="facet"``).

    The radial collapsed coordinate is substituted by ``r**grading`` which
    turns integrable power singularities into smooth integrands.
    """
    n = degree // 2 + 1
    nr = 2 * n + 8
    r, wr = _gauss01(nr)
    q = float(grading)
    jac = q * r ** (q - 1.0)
    # lam0 is the anchor's barycentric coordinate, kept exact near 0
    if toward == "vertex":
        rho = r ** q
        lam0 = 1.0 - rho
    elif toward == "facet":
        lam0 = r ** q
        rho = 1.0 - lam0
    else:
        raise QuadratureError(f"unknown grading target {toward!r}")
    if dim == 1:
        pts = np.stack([lam0, rho], axis=1)
        wts = wr * jac
    else:
        s, ws = _gauss01(n)
        L0, S = np.meshgrid(lam0, s, indexing="ij")
        RHO = np.meshgrid(rho, s, indexing="ij")[0]
        L0, S, RHO = L0.ravel(), S.ravel(), RHO.ravel()
        pts = np.stack([L0, RHO * (1.0 - S), RHO * S], axis=1)
        wts = 2.0 * np.outer(wr * jac * rho, ws).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, degree, pts, wts)


def _red_children(tri):
    a, b, c = tri
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [np.stack(t) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c),
                                  (bc, ca, ab))]


@lru_cache(maxsize=None)
def composite_rule(dim, degree, splits):
    """``make_quadrature`` applied on ``2**(dim*splits)`` congruent pieces."""
    base = make_quadrature(dim, degree)
    if splits == 0:
        return base
    pieces = [np.eye(dim + 1)]            # sub-simplices in barycentric coords
    for _ in range(splits):
        if dim == 1:
            pieces = [np.stack(q) for p in pieces
                      for q in ((p[0], (p[0] + p[1]) / 2),
                                ((p[0] + p[1]) / 2, p[1]))]
        else:
            pieces = [c for p in pieces for c in _red_children(p)]
    pts = np.concatenate([base.points @ p for p in pieces])
    wts = np.tile(base.weights, len(pieces)) / len(pieces)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, degree, pts, wts)


def splits_for(diameter, resolution):
    """Number of uniform subdivisions bringing ``diameter`` below
    ``resolution``."""
    if resolution is None or diameter <= resolution:
        return 0
    return int(math.ceil(math.log2(diameter / resolution)))


@dataclass(frozen=True)
class SingularLine:
    """The hyperplane ``normal . x = offset`` (a point in 1D, a line in 2D).

    ``grading`` is the exponent of the graded rule used next to it.
    """
    normal: tuple
    offset: float
    grading: float = 4.0

    def signed_distance(self, x):
        nrm = np.asarray(self.normal, dtype=float)
        return (x @ nrm - self.offset) / np.linalg.norm(nrm)


@dataclass
class QuadPoints:
    """A batch of quadrature points, all attached to parent elements."""
    elements: np.ndarray  # parent element per point
    x: np.ndarray         # physical coordinates, (N, dim)
    weights: np.ndarray   # absolute weights (already scaled by volumes)
    lam: np.ndarray       # barycentric coordinates in the parent, (N, dim+1)


def _simplex_volume(p):
    if p.shape[1] == 1:
        return abs(p[1, 0] - p[0, 0])
    e1, e2 = p[1] - p[0], p[2] - p[0]
    return 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])


def _cut(p, d, tol):
    """Split simplex ``p`` by the zero set of the affine function with
    vertex values ``d``. Returns ``(vertices, mode)`` pieces with the
    grading anchor as vertex 0; mode is None, "vertex" or "facet".
    """
    on = np.abs(d) <= tol
    k = len(d)
    if k == 2:
        if on[0]:
            return [(p, "vertex")]
        if on[1]:
            return [(p[::-1], "vertex")]
        if d[0] * d[1] > 0:
            return [(p, None)]
        c = p[0] + d[0] / (d[0] - d[1]) * (p[1] - p[0])
        return [(np.stack([c, p[0]]), "vertex"),
                (np.stack([c, p[1]]), "vertex")]

    n_on = int(on.sum())
    if n_on == 2:
        w = int(np.flatnonzero(~on)[0])
        return [(np.stack([p[w], p[(w + 1) % 3], p[(w + 2) % 3]]), "facet")]
    if n_on == 1:
        v = int(np.flatnonzero(on)[0])
        b, c = (v + 1) % 3, (v + 2) % 3
        if d[b] * d[c] > 0:
            return [(np.stack([p[v], p[b], p[c]]), "vertex")]
        r = p[b] + d[b] / (d[b] - d[c]) * (p[c] - p[b])
        return [(np.stack([p[b], p[v], r]), "facet"),
                (np.stack([p[c], p[v], r]), "facet")]
    if np.all(d > 0) or np.all(d < 0):
        return [(p, None)]
    # lone vertex a on one side, b and c on the other
    sgn = np.sign(d)
    a = next(i for i in range(3) if sgn[i] != sgn[(i + 1) % 3]
             and sgn[i] != sgn[(i + 2) % 3])
    b, c = (a + 1) % 3, (a + 2) % 3
    P = p[a] + d[a] / (d[a] - d[b]) * (p[b] - p[a])
    Q = p[a] + d[a] / (d[a] - d[c]) * (p[c] - p[a])
    return [(np.stack([p[a], P, Q]), "facet"),
            (np.stack([P, p[b], p[c]]), "vertex"),
            (np.stack([p[c], P, Q]), "facet")]


def _touches(d, tol):
    return np.any(np.abs(d) <= tol, axis=1) | (
        np.any(d > tol, axis=1) & np.any(d < -tol, axis=1))


def iter_element_quadrature(mesh, degree, singular=(), chunk=16384,
                            elements=None, resolution=None):
    """Yield :class:`QuadPoints` covering the given elements (all by default).

    Elements are visited in increasing index order within each batch kind,
    so reductions over the yielded batches are reproducible.
    """
    ids_all = np.arange(mesh.n_elements) if elements is None else \
        np.asarray(elements)
    for start in range(0, len(ids_all), chunk):
        ids = ids_all[start:start + chunk]
        P = mesh.vertices[mesh.elements[ids]]
        tol = 1e-12 * mesh.diameters[ids][:, None]
        special = np.zeros(len(ids), dtype=bool)
        for line in singular:
            d = line.signed_distance(P.reshape(-1, mesh.dim)).reshape(
                len(ids), -1)
            special |= _touches(d, tol)

        splits = np.array([splits_for(h, resolution)
                           for h in mesh.diameters[ids]], dtype=int) \
            if resolution is not None else np.zeros(len(ids), dtype=int)
        batches = []
        for k in np.unique(splits[~special]):
            rule = composite_rule(mesh.dim, degree, int(k))
            sel = ~special & (splits == k)
            reg = ids[sel]
            x = np.einsum("qi,tid->tqd", rule.points, P[sel])
            batches.append(QuadPoints(
                np.repeat(reg, len(rule)),
                x.reshape(-1, mesh.dim),
                (mesh.volumes[reg][:, None] * rule.weights[None, :]).ravel(),
                np.tile(rule.points, (len(reg), 1))))
        for t, p in zip(ids[special], P[special]):
            batches.append(_special_points(mesh, t, p, degree, singular))
        if batches:
            yield _merge(batches, mesh.dim)


def _special_points(mesh, t, p, degree, singular):
    pieces = [(p, None, None)]
    for line in singular:
        nxt = []
        for q, mode, ln in pieces:
            if mode is not None:
                nxt.append((q, mode, ln))
                continue
            tol = 1e-12 * mesh.diameters[t]
            for sub, m in _cut(q, line.signed_distance(q), tol):
                nxt.append((sub, m, line))
        pieces = nxt
    xs, ws = [], []
    for q, mode, line in pieces:
        vol = _simplex_volume(q)
        if vol <= 0.0:
            continue
        if mode is None:
            rule = make_quadrature(mesh.dim, degree)
        else:
            rule = graded_rule(mesh.dim, degree, mode, line.grading)
        xs.append(rule.points @ q)
        ws.append(vol * rule.weights)
    x = np.concatenate(xs)
    el = np.full(len(x), t)
    return QuadPoints(el, x, np.concatenate(ws), mesh.barycentric(el, x))


def _merge(batches, dim):
    return QuadPoints(
        np.concatenate([b.elements for b in batches]).astype(np.int64),
        np.concatenate([b.x for b in batches]).reshape(-1, dim),
        np.concatenate([b.weights for b in batches]),
        np.concatenate([b.lam for b in batches]).reshape(-1, dim + 1))


def integrate(mesh, fn, degree=10, singular=(), resolution=None):
    """Per-element integrals of a scalar function ``fn(x)``."""
    out = np.zeros(mesh.n_elements)
    for qp in iter_element_quadrature(mesh, degree, singular,
                                      resolution=resolution):
        out += np.bincount(qp.elements, qp.weights * fn(qp.x),
                           minlength=mesh.n_elements)
    return out
