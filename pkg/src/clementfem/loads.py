"""H^{-1} loads and the manufactured solutions used by the experiments.

A load is stored as ``<f, v> = int g . grad v dx + int f0 v dx``. Loads
that are not functions (e.g. ``-div`` of a non-smooth field) only have the
gradient part. Non-smooth directions are declared as singular lines so the
quadrature can split and grade around them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .elements import bubble_gradients, bubble_values
from .quadrature import SingularLine, iter_element_quadrature


class LoadError(ValueError):
    pass


@dataclass(frozen=True)
class H1DualLoad:
    grad_part: Optional[Callable] = None
    l2_part: Optional[Callable] = None
    singular_lines: tuple = ()
    degree: int = 10
    resolution: Optional[float] = None

    @property
    def has_l2(self):
        """True if the load is a plain L^2 function."""
        return self.grad_part is None and self.l2_part is not None

    def __add__(self, other):
        return combine([(1.0, self), (1.0, other)])

    def __rmul__(self, c):
        return combine([(float(c), self)])


def combine(terms):
    """Linear combination ``sum c_i f_i`` of loads."""
    grads = [(c, f.grad_part) for c, f in terms if f.grad_part is not None]
    l2s = [(c, f.l2_part) for c, f in terms if f.l2_part is not None]
    g = (lambda x: sum(c * fn(x) for c, fn in grads)) if grads else None
    f0 = (lambda x: sum(c * fn(x) for c, fn in l2s)) if l2s else None
    lines = tuple(dict.fromkeys(ln for _, f in terms for ln in f.singular_lines))
    res = [f.resolution for _, f in terms if f.resolution is not None]
    return H1DualLoad(g, f0, lines, max(f.degree for _, f in terms),
                      min(res) if res else None)


def _check(values, what):
    if not np.all(np.isfinite(values)):
        raise LoadError(f"non-finite quadrature value in {what}")


def load_moments(load, mesh, degree=None):
    """Hat moments ``<f, eta_z>`` (all vertices), bubble moments
    ``<f, eta_b,T>`` and, for L^2 loads, element integrals ``<f, chi_T>``.
    """
    degree = load.degree if degree is None else degree
    nV, nT = mesh.n_vertices, mesh.n_elements
    hats = np.zeros(nV)
    bubbles = np.zeros(nT)
    means = np.zeros(nT) if load.l2_part is not None else None
    grads = mesh.barycentric_gradients
    for qp in iter_element_quadrature(mesh, degree, load.singular_lines,
                                      resolution=load.resolution):
        el = qp.elements
        verts = mesh.elements[el]
        w = qp.weights
        contrib = np.zeros((len(w), mesh.dim + 1))
        bub = np.zeros(len(w))
        if load.grad_part is not None:
            g = np.asarray(load.grad_part(qp.x), dtype=float).reshape(
                len(w), mesh.dim)
            _check(g, "gradient part")
            contrib += np.einsum("nd,nid->ni", g, grads[el])
            bub += np.einsum("nd,nd->n", g,
                             bubble_gradients(mesh, el, qp.lam))
        if load.l2_part is not None:
            f0 = np.asarray(load.l2_part(qp.x), dtype=float).reshape(len(w))
            _check(f0, "L2 part")
            contrib += f0[:, None] * qp.lam
            bub += f0 * bubble_values(mesh, el, qp.lam)
            means += np.bincount(el, w * f0, minlength=nT)
        hats += np.bincount(verts.ravel(), (w[:, None] * contrib).ravel(),
                            minlength=nV)
        bubbles += np.bincount(el, w * bub, minlength=nT)
    return hats, bubbles, means


def pair_with_p1(load, mesh, degree=None):
    """``<f, eta_z>`` for the interior vertices (in index order)."""
    hats, _, _ = load_moments(load, mesh, degree)
    return hats[mesh.interior_vertices]


def pair_with_bubbles(load, mesh, degree=None):
    """``<f, eta_b,T>`` for every element."""
    return load_moments(load, mesh, degree)[1]


def element_integrals(load, mesh, degree=None):
    """``<f, chi_T>``; only defined for L^2 loads."""
    if not load.has_l2:
        raise LoadError("load has no L^2 representation")
    return load_moments(load, mesh, degree)[2]


# -- manufactured solutions --------------------------------------------------

@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    dim: int
    lo: tuple
    hi: tuple
    exact_u: Callable
    exact_grad_u: Callable
    load: H1DualLoad
    alt_load: Optional[H1DualLoad] = None
    expected_rates: dict = field(default_factory=dict)

    @property
    def singular_lines(self):
        return self.load.singular_lines

    @property
    def resolution(self):
        return self.load.resolution


def _sine1d():
    pi = np.pi
    u = lambda x: np.sin(pi * x[:, 0])
    du = lambda x: (pi * np.cos(pi * x[:, 0]))[:, None]
    f = lambda x: pi ** 2 * np.sin(pi * x[:, 0])
    return ManufacturedCase(
        "clement1d", 1, (0.0,), (1.0,), u, du, H1DualLoad(l2_part=f),
        H1DualLoad(grad_part=du),
        {"clement": 1.0, "weighted-clement": 2.0})


def _hms_quarter():
    pi = np.pi

    def u(x):
        d = np.abs(x[:, 0] - x[:, 1])
        return d ** 0.75 * np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def du(x):
        X, Y = x[:, 0], x[:, 1]
        d = np.abs(X - Y)
        sx, cx = np.sin(pi * X), np.cos(pi * X)
        sy, cy = np.sin(pi * Y), np.cos(pi * Y)
        sing = 0.75 * np.sign(X - Y) * d ** -0.25 * sx * sy
        return np.stack([sing + d ** 0.75 * pi * cx * sy,
                         -sing + d ** 0.75 * pi * sx * cy], axis=1)

    line = SingularLine((1.0, -1.0), 0.0)
    load = H1DualLoad(grad_part=du, singular_lines=(line,))
    return ManufacturedCase(
        "hms-quarter", 2, (0.0, 0.0), (1.0, 1.0), u, du, load, None,
        {"errUL2": 1.0, "errSigmaL2": 0.25, "errUstar": 1.25})


BETA_ROUGH = 0.5 + 1.0 / 128.0


def _l2_rough():
    b = BETA_ROUGH

    def parts(X):
        ax = np.abs(X)
        g = X * ax ** b
        g1 = (1.0 + b) * ax ** b
        with np.errstate(divide="ignore", invalid="ignore"):
            g2 = (1.0 + b) * b * np.sign(X) * ax ** (b - 1.0)
        return g, g1, g2

    def u(x):
        X, Y = x[:, 0], x[:, 1]
        return parts(X)[0] * (1 - X ** 2) * (1 - Y ** 2)

    def du(x):
        X, Y = x[:, 0], x[:, 1]
        g, g1, _ = parts(X)
        P, Q = 1 - X ** 2, 1 - Y ** 2
        return np.stack([(g1 * P - 2 * X * g) * Q, g * P * (-2 * Y)], axis=1)

    def f(x):
        X, Y = x[:, 0], x[:, 1]
        g, g1, g2 = parts(X)
        P, Q = 1 - X ** 2, 1 - Y ** 2
        uxx = (g2 * P - 4 * X * g1 - 2 * g) * Q
        uyy = -2 * g * P
        return -(uxx + uyy)

    line = SingularLine((1.0, 0.0), 0.0)
    return ManufacturedCase(
        "l2-rough", 2, (-1.0, -1.0), (1.0, 1.0), u, du,
        H1DualLoad(l2_part=f, singular_lines=(line,)),
        H1DualLoad(grad_part=du, singular_lines=(line,)),
        {"errUstar[none]": 1.5, "errUstar[weighted-clement]": 2.0})


WATERFALL_RESOLUTION = 1.0 / 8.0


def _waterfall():
    def pieces(x):
        X, Y = x[:, 0], x[:, 1]
        E = np.exp(-100.0 * (X - 0.5) ** 2 - (Y - 117.0) ** 2 / 10000.0)
        p, dp = X * (X - 1), 2 * X - 1
        q, dq = Y * (Y - 1), 2 * Y - 1
        a = -200.0 * (X - 0.5)
        b = -(Y - 117.0) / 5000.0
        return E, p, dp, q, dq, a, b

    def u(x):
        E, p, _, q, _, _, _ = pieces(x)
        return p * q * E

    def du(x):
        E, p, dp, q, dq, a, b = pieces(x)
        return np.stack([q * E * (dp + p * a), p * E * (dq + q * b)], axis=1)

    def f(x):
        E, p, dp, q, dq, a, b = pieces(x)
        uxx = q * E * (2.0 + 2 * dp * a - 200.0 * p + p * a * a)
        uyy = p * E * (2.0 + 2 * dq * b - q / 5000.0 + q * b * b)
        return -(uxx + uyy)

    return ManufacturedCase(
        "waterfall", 2, (0.0, 0.0), (1.0, 1.0), u, du,
        H1DualLoad(l2_part=f, degree=12, resolution=WATERFALL_RESOLUTION),
        H1DualLoad(grad_part=du, degree=12, resolution=WATERFALL_RESOLUTION),
        {"errSigmaL2": 1.0, "errUL2": 2.0, "errUH1": 1.0})


def catalog():
    return [_sine1d(), _hms_quarter(), _l2_rough(), _waterfall()]


def get_case(name):
    for case in catalog():
        if case.name == name:
            return case
    raise KeyError(f"unknown case {name!r}; choose from "
                   f"{[c.name for c in catalog()]}")
