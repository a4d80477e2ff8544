import numpy as np
import pytest
from hypothesis import given, strategies as st

from clementfem.clement import (WeightError, bubble_lift, clement_interpolate,
                                convex_residuals, l2_project_p0, make_weights,
                                project_load, project_p0, regularize,
                                solve_convex_weights, uniform_weights)
from clementfem.elements import P0Field, bubble_values
from clementfem.loads import H1DualLoad, load_moments
from clementfem.mesh import (make_interval_mesh, make_square_mesh, refine,
                             refine_newest_vertex)
from clementfem.postprocess import error_l2
from clementfem.quadrature import integrate, iter_element_quadrature
from conftest import perturbed_square

PROJ = ["clement", "weighted-clement"]


def _jittered_refined(seed):
    m = perturbed_square(np.random.default_rng(seed), 2, 0.15)
    return refine_newest_vertex(refine_newest_vertex(m))


def test_uniform_1d_weights_are_half():
    m = make_interval_mesh(0, 1, np.linspace(0, 1, 9)[1:-1])
    w = solve_convex_weights(m)
    for z in m.interior_vertices:
        assert sorted(w.alpha(z).values()) == pytest.approx([0.5, 0.5])
    u = uniform_weights(m)
    assert np.allclose(w.matrix.toarray(), u.matrix.toarray(), atol=1e-15)


def test_alternating_1d_weights():
    h = 0.1
    m = make_interval_mesh(0, 0.9, [h, 3 * h, 4 * h, 6 * h, 7 * h])
    w = solve_convex_weights(m)
    x = m.vertices[:, 0]
    z = int(np.flatnonzero(np.isclose(x, h))[0])      # left h, right 2h
    a = w.alpha(z)
    left = next(t for t in a if m.vertices[m.elements[t], 0].min() < h / 2)
    right = next(t for t in a if t != left)
    assert a[left] == pytest.approx(2 / 3)
    assert a[right] == pytest.approx(1 / 3)


def test_interval_weights_closed_form():
    m = make_interval_mesh(0, 1, [0.2, 0.45])
    w = solve_convex_weights(m)
    zm, z, zp = 0.0, 0.2, 0.45
    zi = int(np.flatnonzero(np.isclose(m.vertices[:, 0], z))[0])
    a = w.alpha(zi)
    vals = sorted(a.items(), key=lambda kv: m.centroids[kv[0], 0])
    assert vals[0][1] == pytest.approx((zp - z) / (zp - zm))
    assert vals[1][1] == pytest.approx((z - zm) / (zp - zm))


def test_four_triangle_fan_lexicographic_choice(fan_mesh):
    m = fan_mesh
    w = solve_convex_weights(m)
    a = w.alpha(4)
    # ranked by sorted vertex triples: T1, T4, T2, T3; the first subset
    # (T1, T4, T2) already contains z
    assert a.keys() == {0, 1, 3}
    assert list(a.values()) == pytest.approx([1 / 3] * 3, abs=1e-14)
    # two distinct convex combinations reproduce z
    s, z = m.centroids, m.vertices[4]
    assert np.allclose(2 / 3 * s[0] + 1 / 3 * s[2], z, atol=1e-14)
    assert np.allclose((s[0] + s[1] + s[3]) / 3, z, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_convex_residuals_on_random_meshes(seed):
    m = _jittered_refined(seed)
    w = solve_convex_weights(m)
    pos, total = convex_residuals(m, w)
    h = m.patch_diameters[m.interior_vertices]
    assert np.all(pos <= 1e-12 * h)
    assert np.all(total <= 1e-12)
    assert w.matrix.data.min() >= 0.0


def test_degenerate_mesh_has_empty_weights():
    m = make_interval_mesh(0, 1, [])
    for proj in PROJ:
        w = make_weights(m, proj)
        assert w.matrix.nnz == 0
    # Q reduces to the bubble part
    f = H1DualLoad(l2_part=lambda x: 1 + x[:, 0])
    q = project_load(f, m, make_weights(m, "weighted-clement"))
    _, b, _ = load_moments(f, m)
    assert np.allclose(q.values, b)


def test_unknown_projector():
    with pytest.raises(ValueError):
        make_weights(make_interval_mesh(0, 1, [0.5]), "scott-zhang")


@pytest.mark.parametrize("proj", PROJ)
def test_constants_reproduced(proj, criss_cross3):
    m = criss_cross3
    ju = clement_interpolate(make_weights(m, proj), np.full(m.n_elements, 3.0),
                             m)
    assert np.allclose(ju.values[m.interior_vertices], 3.0, atol=1e-14)
    assert np.all(ju.values[m.boundary_vertex] == 0)


@given(st.integers(0, 2**32 - 1))
def test_affine_vertex_reproduction(seed):
    rng = np.random.default_rng(seed)
    m = _jittered_refined(seed % 7)
    a, b, c = rng.uniform(-5, 5, 3)
    q = lambda x: a + b * x[:, 0] + c * x[:, 1]
    ju = clement_interpolate(solve_convex_weights(m), q, m, degree=1)
    iv = m.interior_vertices
    assert np.allclose(ju.values[iv], q(m.vertices[iv]), rtol=0, atol=1e-12)


def test_interpolant_depends_on_means_only(criss_cross3, rng):
    m = criss_cross3
    w = solve_convex_weights(m)
    v = lambda x: np.exp(x[:, 0]) * np.cos(3 * x[:, 1])
    a = clement_interpolate(w, v, m).values
    b = clement_interpolate(w, l2_project_p0(v, m), m).values
    assert np.allclose(a, b, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_p0_reproduction(seed):
    rng = np.random.default_rng(seed)
    m = _jittered_refined(seed % 5)
    vals = rng.standard_normal(m.n_elements)
    for proj in PROJ:
        q = project_p0(vals, m, make_weights(m, proj))
        assert np.max(np.abs(q.values - vals)) < 1e-10


def test_p0_reproduction_through_quadrature(criss_cross3, rng):
    # same property with the moments computed by the load quadrature
    m = criss_cross3
    vals = rng.standard_normal(m.n_elements)
    lookup = lambda x: vals[_locate(m, x)]
    f = H1DualLoad(l2_part=lookup, degree=4)
    for proj in PROJ:
        q = project_load(f, m, make_weights(m, proj))
        assert np.max(np.abs(q.values - vals)) < 1e-10


def _locate(mesh, x):
    lam = np.stack([mesh.barycentric(np.full(len(x), t), x)
                    for t in range(mesh.n_elements)], axis=1)
    return np.argmax(lam.min(axis=2), axis=1)


@pytest.mark.parametrize("proj", PROJ)
def test_adjoint_identity(proj, rng):
    m = _jittered_refined(1)
    w = make_weights(m, proj)
    n = m.dim
    k = rng.uniform(-2, 2, 4)
    f = H1DualLoad(l2_part=lambda x: np.exp(k[0] * x[:, 0] + k[1] * x[:, 1])
                   + k[2] * np.sin(5 * x[:, 0] * x[:, 1]) + k[3])
    v = rng.standard_normal(m.n_elements)
    lhs = np.sum(project_load(f, m, w).values * v * m.volumes)
    # <f, J v + B (1 - J) v>, with every pairing done by quadrature
    jv = clement_interpolate(w, v, m)
    rest = np.zeros(m.n_elements)           # int_T (v - J v)
    rhs = 0.0
    for qp in iter_element_quadrature(m, 12):
        jvals = jv.evaluate(m, qp.elements, qp.lam)
        rest += np.bincount(qp.elements, qp.weights * (v[qp.elements] - jvals),
                            minlength=m.n_elements)
        rhs += np.sum(qp.weights * f.l2_part(qp.x) * jvals)
    for qp in iter_element_quadrature(m, 12):
        bub = bubble_values(m, qp.elements, qp.lam) * rest[qp.elements]
        rhs += np.sum(qp.weights * f.l2_part(qp.x) * bub)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_local_reduction_to_bubble_moment():
    # zero hat moments everywhere: Q f is the bubble moment
    m = make_square_mesh((0, 0), (1, 1), 2, "single")
    w = solve_convex_weights(m)
    from clementfem.clement import project_moments
    hats = np.zeros(m.n_vertices)
    b = np.zeros(m.n_elements)
    b[3] = 1.0
    # cancel the hat correction of the single interior vertex
    hats[m.interior_vertices] = m.volumes[3] / 3
    q = project_moments(hats, b, m, w)
    assert np.allclose(q.values, b)


def test_bubble_lift():
    m = make_square_mesh((0, 0), (2, 1), 2, "single")
    chi = np.zeros(m.n_elements)
    chi[2] = 1.0
    c = bubble_lift(chi, m)
    assert np.count_nonzero(c) == 1 and c[2] == pytest.approx(m.volumes[2])
    # element mean of B v equals that of v
    v = np.random.default_rng(0).standard_normal(m.n_elements)
    coef = bubble_lift(v, m)
    mean_bv = integrate(m, lambda x: np.zeros(len(x)), 1)
    for qp in iter_element_quadrature(m, 4):
        mean_bv += np.bincount(qp.elements, qp.weights * coef[qp.elements] *
                               bubble_values(m, qp.elements, qp.lam),
                               minlength=m.n_elements)
    assert np.allclose(mean_bv, v * m.volumes, atol=1e-13)


def test_bubble_lift_bounded(rng):
    # ||B v|| <= C ||v|| with a mesh-independent C
    ratios = []
    for lv in range(3):
        m = refine(make_square_mesh((0, 0), (1, 1), 1, "criss-cross"), lv)
        for _ in range(5):
            v = rng.standard_normal(m.n_elements)
            coef = bubble_lift(v, m)
            nb = 0.0
            for qp in iter_element_quadrature(m, 6):
                nb += np.sum(qp.weights * (coef[qp.elements] * bubble_values(
                    m, qp.elements, qp.lam)) ** 2)
            ratios.append(np.sqrt(nb) / np.sqrt(np.sum(v ** 2 * m.volumes)))
    assert max(ratios) < 3.0
    assert max(ratios) - min(ratios) < 1e-10


def test_l2_projection_interval():
    m = make_interval_mesh(0, 1, [0.5])
    assert l2_project_p0(lambda x: x[:, 0], m).values == pytest.approx(
        [0.25, 0.75])
    assert l2_project_p0(lambda x: 0 * x[:, 0] + 7, m).values == \
        pytest.approx([7, 7])


def test_l2_projection_first_order():
    u = lambda x: np.sin(np.pi * x[:, 0])
    errs = []
    for n in (8, 16, 32, 64):
        m = make_interval_mesh(0, 1, np.linspace(0, 1, n + 1)[1:-1])
        errs.append(error_l2(u, l2_project_p0(u, m), m))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates[-1] == pytest.approx(1.0, abs=0.02)


def test_weighted_second_order_2d():
    v = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    m = make_square_mesh((0, 0), (1, 1), 2, "single")
    errs = []
    for _ in range(6):
        w = solve_convex_weights(m)
        errs.append(error_l2(v, clement_interpolate(w, v, m), m))
        m = refine_newest_vertex(m)
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates[-1] == pytest.approx(2.0, abs=0.05)


def test_interpolant_stability(rng):
    for seed in range(3):
        m = _jittered_refined(seed)
        for proj in PROJ:
            w = make_weights(m, proj)
            for _ in range(5):
                v = rng.standard_normal(m.n_elements)
                jv = clement_interpolate(w, v, m)
                nj = error_l2(lambda x: 0 * x[:, 0], jv, m, 2)
                nv = np.sqrt(np.sum(v ** 2 * m.volumes))
                assert nj / nv <= 10


def test_regularize_none_rejects_non_l2(unit_square2):
    g = H1DualLoad(grad_part=lambda x: x)
    with pytest.raises(ValueError):
        regularize(g, unit_square2, "none")
    f = H1DualLoad(l2_part=lambda x: 1 + x[:, 0])
    r = regularize(f, unit_square2, "none")
    assert np.allclose(r.values, 1 + unit_square2.centroids[:, 0])
