import numpy as np
import pytest
from hypothesis import given, strategies as st

from clementfem.elements import (BasisError, P0Field, P1Field, RT0Field,
                                 bubble_basis_eval, bubble_constant,
                                 dual_basis_eval, hat_basis_eval,
                                 rt0_basis_eval, rt0_divergence)
from clementfem.mesh import (SimplicialMesh, make_interval_mesh,
                             make_square_mesh, refine_uniform,
                             simplex_monomial_integral)
from clementfem.quadrature import make_quadrature
from conftest import perturbed_square


def _random_point(rng, mesh, t):
    lam = rng.dirichlet(np.ones(mesh.dim + 1))
    return lam @ mesh.vertices[mesh.elements[t]]


def test_hat_at_vertex_and_centroid(unit_square2):
    m = unit_square2
    t = 0
    z = m.elements[t, 1]
    assert hat_basis_eval(m, z, t, m.vertices[z]) == pytest.approx(1.0)
    assert hat_basis_eval(m, z, t, m.centroids[t]) == pytest.approx(1 / 3)
    other = next(v for v in range(m.n_vertices) if v not in m.elements[t])
    assert hat_basis_eval(m, other, t, m.centroids[t]) == 0.0


def test_hat_rejects_outside_point(unit_square2):
    with pytest.raises(BasisError):
        hat_basis_eval(unit_square2, 0, 0, np.array([5.0, 5.0]))


def test_partition_of_unity(rng, criss_cross3):
    m = criss_cross3
    for t in rng.integers(0, m.n_elements, 20):
        x = _random_point(rng, m, t)
        s = sum(hat_basis_eval(m, z, t, x) for z in m.elements[t])
        assert abs(s - 1) < 1e-13


def test_dual_formula_2d(unit_square2):
    m = unit_square2
    z = int(m.interior_vertices[0])
    t = int(np.flatnonzero((m.elements == z).any(1))[0])
    x = m.centroids[t]
    lam = 1 / 3
    want = (12 * lam - 3) / m.patch_volumes[z]
    assert dual_basis_eval(m, z, t, x) == pytest.approx(want)


def test_dual_rejects_boundary(unit_square2):
    with pytest.raises(BasisError):
        dual_basis_eval(unit_square2, 0, 0, unit_square2.vertices[0])


def _gram(mesh, f, g, degree=4):
    rule = make_quadrature(mesh.dim, degree)
    total = 0.0
    for t in range(mesh.n_elements):
        xs = rule.points @ mesh.vertices[mesh.elements[t]]
        vals = [f(t, x) * g(t, x) for x in xs]
        total += mesh.volumes[t] * np.dot(rule.weights, vals)
    return total


@pytest.mark.parametrize("mesh", [
    refine_uniform(refine_uniform(refine_uniform(
        make_square_mesh((0, 0), (1, 1), 1, "single")))),
    perturbed_square(np.random.default_rng(3), 3, 0.15),
    make_interval_mesh(0, 1, [0.1, 0.3, 0.35, 0.8]),
])
def test_biorthogonality(mesh):
    # G[z, z'] accumulated element by element; only local pairs are nonzero
    rule = make_quadrature(mesh.dim, 2)
    interior = set(mesh.interior_vertices.tolist())
    G = {}
    for t in range(mesh.n_elements):
        xs = rule.points @ mesh.vertices[mesh.elements[t]]
        for z in mesh.elements[t]:
            if z not in interior:
                continue
            psi = [dual_basis_eval(mesh, z, t, x) for x in xs]
            for zp in mesh.elements[t]:
                if zp in interior:
                    eta = [hat_basis_eval(mesh, zp, t, x) for x in xs]
                    G[z, zp] = G.get((z, zp), 0.0) + mesh.volumes[t] * \
                        np.dot(rule.weights, np.multiply(psi, eta))
    worst = max(abs(g - (z == zp)) for (z, zp), g in G.items())
    assert worst < 1e-12
    assert all(G.get((z, z)) is not None for z in interior)


def test_dual_unit_integral(unit_square2):
    m = unit_square2
    z = int(m.interior_vertices[0])
    val = _gram(m, lambda t, x: dual_basis_eval(m, z, t, x),
                lambda t, x: 1.0, 2)
    assert val == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("dim", [1, 2])
def test_bubble_constant_from_monomials(dim):
    # inverse of the Dirichlet integral of prod(lambda_i)
    exact = 1.0 / simplex_monomial_integral((1,) * (dim + 1))
    assert bubble_constant(dim) == pytest.approx(exact)
    assert bubble_constant(dim) == {1: 6, 2: 60}[dim]


@pytest.mark.parametrize("mesh", [
    make_square_mesh((0, 0), (3, 1), 2, "criss-cross"),
    make_interval_mesh(-1, 2, [0.3]),
])
def test_bubble_unit_integral_and_trace(mesh):
    rule = make_quadrature(mesh.dim, mesh.dim + 1)
    for t in range(mesh.n_elements):
        P = mesh.vertices[mesh.elements[t]]
        vals = [bubble_basis_eval(mesh, t, lam @ P) for lam in rule.points]
        assert mesh.volumes[t] * np.dot(rule.weights, vals) == \
            pytest.approx(1.0, abs=1e-13)
        for v in P:
            assert abs(bubble_basis_eval(mesh, t, v)) < 1e-13


def _edge_points(mesh, f):
    a, b = mesh.vertices[mesh.facets[f]]
    return [a + s * (b - a) for s in (0.1, 0.5, 0.9)]


def test_rt0_normal_traces(criss_cross3):
    m = criss_cross3
    for t in range(0, m.n_elements, 7):
        for k, f in enumerate(m.element_facets[t]):
            for g in m.element_facets[t]:
                n = m.facet_normals[g]
                for x in _edge_points(m, g):
                    val = rt0_basis_eval(m, f, t, x) @ n
                    assert val == pytest.approx(float(f == g), abs=1e-12)


def test_rt0_divergence_formula(criss_cross3):
    m = criss_cross3
    div = rt0_divergence(m)
    fm = m.facet_measures[m.element_facets]
    assert np.allclose(div, m.facet_signs * fm / m.volumes[:, None])
    # finite differences of the affine basis
    t, k, h = 5, 1, 1e-6
    f = m.element_facets[t, k]
    x = m.centroids[t]
    fd = sum((rt0_basis_eval(m, f, t, x + h * e)[i]
              - rt0_basis_eval(m, f, t, x - h * e)[i]) / (2 * h)
             for i, e in enumerate(np.eye(2)))
    assert fd == pytest.approx(div[t, k], rel=1e-7)


@given(st.integers(0, 2**32 - 1))
def test_rt0_normal_continuity(seed):
    rng = np.random.default_rng(seed)
    m = perturbed_square(rng, 2, 0.2)
    field = RT0Field(rng.standard_normal(m.n_facets))
    adj = [[] for _ in range(m.n_facets)]
    for t in range(m.n_elements):
        for f in m.element_facets[t]:
            adj[f].append(t)
    for f in np.flatnonzero(~m.boundary_facet):
        t1, t2 = adj[f]
        x = np.array(_edge_points(m, f))
        n = m.facet_normals[f]
        v1 = field.evaluate(m, np.full(3, t1), x) @ n
        v2 = field.evaluate(m, np.full(3, t2), x) @ n
        assert np.max(np.abs(v1 - v2)) < 1e-12


def test_rt0_1d_is_continuous_p1():
    m = make_interval_mesh(0, 1, [0.3, 0.5])
    field = RT0Field(np.array([1.0, -2.0, 0.5, 3.0]))
    # value at each vertex is its coefficient, from both sides
    for t in range(m.n_elements):
        for v in m.elements[t]:
            val = field.evaluate(m, np.array([t]), m.vertices[[v]])[0, 0]
            assert val == pytest.approx(field.values[v])


def test_p1_field_gradient_and_bc(unit_square2):
    m = unit_square2
    u = P1Field(2 * m.vertices[:, 0] - m.vertices[:, 1])
    assert np.allclose(u.gradient(m), [2, -1])
    bad = P1Field(np.ones(m.n_vertices), homogeneous_bc=True)
    with pytest.raises(BasisError):
        bad.check(m)


def test_p0_evaluate():
    f = P0Field([1.0, 2.0])
    assert f.evaluate(None, np.array([1, 0, 1])).tolist() == [2, 1, 2]
