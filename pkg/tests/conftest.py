import numpy as np
import pytest
from hypothesis import settings

from dtncolour.trace import ContactTrace

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def trace_of(events, n=None, horizon=None):
    return ContactTrace.from_events(events, n=n, horizon=horizon)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
