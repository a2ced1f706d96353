import numpy as np
import pytest

from trispline.mesh import rectangle_mesh

ACCEPTANCE_LINES = []


def record(name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def square_mesh():
    return rectangle_mesh(3, 3, (0.0, 1.0, 0.0, 1.0))


@pytest.fixture(scope="session")
def grid_pixels():
    g = (np.arange(30) + 0.5) / 30
    return np.column_stack([a.ravel() for a in np.meshgrid(g, g, indexing="ij")])
