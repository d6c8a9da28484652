import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twcc.config import Config

settings.register_profile("twcc", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("twcc")


@pytest.fixture
def cfg():
    return Config()


@pytest.fixture
def params(cfg):
    return cfg.drone


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
