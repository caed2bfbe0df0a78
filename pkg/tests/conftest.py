import pytest

from polybgk.grid import ModelParams, build_grid
from polybgk.linearized import ProjectionBasis

_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def add(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return ModelParams(0.5, 0.5, 2.0)


@pytest.fixture(scope="session")
def cell_grid(params):
    """Default velocity/energy resolution with a minimal x axis."""
    return build_grid(params, nx=4)


@pytest.fixture(scope="session")
def basis(cell_grid):
    return ProjectionBasis.build(cell_grid)


@pytest.fixture(scope="session")
def small_grid(params):
    return build_grid(params, nx=8, nv=20, ni=8)


@pytest.fixture(scope="session")
def basis_small(small_grid):
    return ProjectionBasis.build(small_grid)
