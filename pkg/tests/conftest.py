import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("sdlab", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sdlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


ACCEPTANCE_SUMMARY: dict[int, str] = {}


@pytest.fixture
def acceptance_summary():
    return ACCEPTANCE_SUMMARY


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_SUMMARY:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_SUMMARY):
            terminalreporter.write_line(ACCEPTANCE_SUMMARY[k])
