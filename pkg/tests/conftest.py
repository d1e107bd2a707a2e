import numpy as np
import pytest

from semistokes.mesh import build_mesh, unit_square

ACCEPTANCE_LINES = []


def two_cell_mesh(scale=1.0):
    """Unit square (times ``scale``) split along the diagonal (0,0)-(1,1)."""
    V = scale * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return build_mesh(V, [[0, 1, 2], [0, 2, 3]])


@pytest.fixture
def two_cells():
    return two_cell_mesh()


@pytest.fixture(scope="session")
def square8():
    return unit_square(8)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
