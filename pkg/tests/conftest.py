import numpy as np
import pytest

from srepnet.synth import EllipsoidSpec, analytic_srep


@pytest.fixture
def ellipsoid():
    return EllipsoidSpec(2.0, 1.5, 1.0)


@pytest.fixture
def srep38(ellipsoid):
    return analytic_srep(ellipsoid, 3, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
