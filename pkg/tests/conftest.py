import numpy as np
import pytest
from hypothesis import settings

from clementfem.mesh import (SimplicialMesh, make_interval_mesh,
                             make_square_mesh, refine_newest_vertex)

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def perturbed_square(rng, cells=3, amount=0.2):
    """Criss-cross mesh of the unit square with jittered interior vertices."""
    m = make_square_mesh((0, 0), (1, 1), cells, "criss-cross")
    v = m.vertices.copy()
    h = 1.0 / cells
    iv = m.interior_vertices
    v[iv] += amount * h * rng.uniform(-1, 1, size=(len(iv), 2))
    return SimplicialMesh(v, m.elements)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_square2():
    return make_square_mesh((0, 0), (1, 1), 2, "single")


@pytest.fixture
def criss_cross3():
    m = make_square_mesh((0, 0), (1, 1), 1, "criss-cross")
    for _ in range(3):
        m = refine_newest_vertex(m)
    return m


@pytest.fixture
def fan_mesh():
    v = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 1 / 3)]
    return SimplicialMesh(v, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])


@pytest.fixture
def interval_mixed():
    return make_interval_mesh(0.0, 1.0, [0.1, 0.25, 0.5, 0.6, 0.85])
