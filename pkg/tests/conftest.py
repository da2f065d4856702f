import numpy as np
import pytest

from hermite_hjb.fespace import HermiteSpace
from hermite_hjb.mesh import graded_lineage, uniform_rect_mesh
from hermite_hjb.precond import AuxiliarySetup


@pytest.fixture(scope="session")
def lineage():
    """Graded meshes, levels 0 through 8."""
    return graded_lineage(8)


@pytest.fixture(scope="session")
def unit_quarter():
    """Uniform h = 1/4 mesh of the unit square (71 free Hermite DOFs)."""
    return uniform_rect_mesh((0, 1, 0, 1), 0.25)


@pytest.fixture(scope="session")
def small_setup(unit_quarter):
    return AuxiliarySetup(HermiteSpace(unit_quarter))


@pytest.fixture(scope="session")
def level0_setup(lineage):
    return AuxiliarySetup(HermiteSpace(lineage[0]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Record one acceptance line; lines are echoed in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
