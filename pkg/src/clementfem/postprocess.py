"""Elementwise P1 postprocessing, error norms and convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elements import P0Field, P1Field, RT0Field
from .quadrature import iter_element_quadrature

ERROR_DEGREE = 10


class ErrorNormError(ValueError):
    pass


@dataclass
class PostprocessedField:
    """Discontinuous affine field ``mean_T + grad_T . (x - s_T)``."""
    gradients: np.ndarray
    means: np.ndarray

    def evaluate(self, mesh, elements, x):
        d = np.asarray(x) - mesh.centroids[elements]
        return self.means[elements] + np.einsum(
            "nd,nd->n", self.gradients[elements], d)


def postprocess(mixed, mesh):
    """``u*`` with ``grad u* = mean_T(sigma)`` and ``mean_T(u*) = u_T``."""
    return PostprocessedField(mixed.sigma.means(mesh),
                              mixed.u.values.copy())


def _approx_values(approx, mesh, qp):
    if isinstance(approx, P0Field):
        return approx.values[qp.elements]
    if isinstance(approx, P1Field):
        return approx.evaluate(mesh, qp.elements, qp.lam)
    if isinstance(approx, (PostprocessedField, RT0Field)):
        return approx.evaluate(mesh, qp.elements, qp.x)
    if callable(approx):
        return approx(qp.x)
    raise TypeError(f"cannot evaluate {type(approx).__name__}")


def error_l2(exact, approx, mesh, degree=ERROR_DEGREE, singular=(),
             resolution=None):
    """``||exact - approx||`` in L^2 (scalar or vector valued)."""
    total = 0.0
    for qp in iter_element_quadrature(mesh, degree, singular,
                                      resolution=resolution):
        e = np.asarray(exact(qp.x), dtype=float)
        a = np.asarray(_approx_values(approx, mesh, qp), dtype=float)
        diff = (e - a).reshape(len(qp.weights), -1)
        sq = np.sum(diff ** 2, axis=1)
        if not np.all(np.isfinite(sq)):
            raise ErrorNormError("non-finite value in error quadrature")
        total += float(np.sum(qp.weights * sq))
    return math.sqrt(total)


def error_h1(exact_grad, approx, mesh, degree=ERROR_DEGREE, singular=(),
             resolution=None):
    """``||grad(exact - approx)||`` for a P1 field (or a callable gradient)."""
    if isinstance(approx, P1Field):
        g = approx.gradient(mesh)
        grad = lambda qp: g[qp.elements]
    elif callable(approx):
        grad = lambda qp: approx(qp.x)
    else:
        raise TypeError("error_h1 needs a P1Field or a gradient callable")
    total = 0.0
    for qp in iter_element_quadrature(mesh, degree, singular,
                                      resolution=resolution):
        diff = np.asarray(exact_grad(qp.x)) - grad(qp)
        sq = np.sum(diff ** 2, axis=1)
        if not np.all(np.isfinite(sq)):
            raise ErrorNormError("non-finite value in error quadrature")
        total += float(np.sum(qp.weights * sq))
    return math.sqrt(total)


@dataclass
class ConvergenceRecord:
    level: int
    n_elements: int
    dofs: int
    errors: dict
    eoc: dict = field(default_factory=dict)


def eoc(records, dim):
    """Fill ``record.eoc`` from consecutive levels.

    ``log(e_prev / e) / log((N / N_prev) ** (1 / dim))``; undefined (None)
    on the first level and when either error vanishes.
    """
    for prev, rec in zip(records, records[1:]):
        ratio = (rec.n_elements / prev.n_elements) ** (1.0 / dim)
        for key, e in rec.errors.items():
            ep = prev.errors.get(key)
            if not ep or not e or ratio == 1.0:
                rec.eoc[key] = None
            else:
                rec.eoc[key] = math.log(ep / e) / math.log(ratio)
    if records:
        records[0].eoc = {k: None for k in records[0].errors}
    return records
