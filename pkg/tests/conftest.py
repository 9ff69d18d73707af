import numpy as np
import pytest

from ensconv import assembly, mesh

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end of the session
ACCEPTANCE: dict = {}


def unit_square_layout(m, dirichlet=("left", "right", "top", "bottom")):
    msh = mesh.classify_boundary(mesh.build_structured_unit_square(m), set(dirichlet))
    return assembly.DofLayout(msh)


@pytest.fixture(scope="session")
def layout4():
    return unit_square_layout(4)


@pytest.fixture(scope="session")
def cavity8():
    return unit_square_layout(8, ("left", "right"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
