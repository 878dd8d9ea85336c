import numpy as np
import pytest

from hlab.cell import flux_correctors, solve_correctors
from hlab.coefficients import make_builtin
from hlab.mesh import build_domain_mesh


@pytest.fixture(scope="session")
def identity():
    return make_builtin("constant", {"c": 1.0})


@pytest.fixture(scope="session")
def laminate():
    return make_builtin("laminate", {"c0": 2.0, "c1": 1.0})


@pytest.fixture(scope="session")
def disk64():
    return build_domain_mesh("disk", 64)


@pytest.fixture(scope="session")
def disk128():
    return build_domain_mesh("disk", 128)


@pytest.fixture(scope="session")
def disk256():
    return build_domain_mesh("disk", 256)


@pytest.fixture(scope="session")
def laminate_cells(laminate):
    """Laminate correctors (with flux correctors) at a few torus resolutions."""
    return {n: flux_correctors(solve_correctors(laminate, n)) for n in (16, 32, 64)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
