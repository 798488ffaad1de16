import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from autogst import burgers_model, heat_model

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def burgers():
    return burgers_model()


@pytest.fixture(scope="session")
def burgers_tape(burgers):
    return burgers.build_tape()


@pytest.fixture(scope="session")
def heat():
    return heat_model()


@pytest.fixture(scope="session")
def heat_tape(heat):
    return heat.build_tape()


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
        for line in RESULTS:
            terminalreporter.write_line(line)
