import numpy as np
import pytest

from leaddrift.model import init_model
from leaddrift.telemetry import GeneratorConfig, generate


@pytest.fixture(scope="session")
def small_run():
    """A 20k-minute trace: enough episodes for end-to-end checks, fast to fit."""
    return generate(GeneratorConfig(n_minutes=20_000, seed=3))


@pytest.fixture(scope="session")
def standard_run():
    return generate(GeneratorConfig(n_minutes=100_000, seed=0))


@pytest.fixture
def tiny_model():
    return init_model(seed=7, h1=4, h2=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
