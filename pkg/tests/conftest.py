import numpy as np
import pytest

from gldeg.geometry import Circle, DomainSpec, build_mesh


@pytest.fixture(scope="session")
def annulus():
    return build_mesh(DomainSpec.annulus(0.3, 0.1))


@pytest.fixture(scope="session")
def annulus_fine():
    return build_mesh(DomainSpec.annulus(0.3, 0.05))


@pytest.fixture(scope="session")
def disk():
    return build_mesh(DomainSpec.disk(0.1))


TWO_HOLES = DomainSpec(Circle((0.0, 0.0), 1.0), (Circle((-0.4, 0.0), 0.15), Circle((0.4, 0.1), 0.15)), 0.08)


@pytest.fixture(scope="session")
def two_holes():
    return build_mesh(TWO_HOLES)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for i in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[i].line())
