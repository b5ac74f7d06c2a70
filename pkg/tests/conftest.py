import numpy as np
import pytest

from evolfem.fespace import build_bulk_space, build_surface_space
from evolfem.mesh import ball_mesh, macro_ball_bulk, macro_sphere_surface, sphere_mesh

# one "criterion N: PASS/FAIL ..." line per acceptance criterion, printed at the end
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def icosahedron():
    return macro_sphere_surface()


@pytest.fixture(scope="session")
def octahedron_ball():
    return macro_ball_bulk()


@pytest.fixture(scope="session")
def sphere_p2():
    return build_surface_space(sphere_mesh(1), 2)


@pytest.fixture(scope="session")
def ball_p2():
    return build_bulk_space(ball_mesh(1), 2)
