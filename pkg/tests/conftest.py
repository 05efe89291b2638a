import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deimbayes import experiments as ex

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def oracle():
    return json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def setup32():
    return ex.make_setup(32)


@pytest.fixture(scope="session")
def bases32_small(setup32):
    """Grid bases from 100 snapshots at N=1024, enough for k <= 50."""
    return ex.grid_snapshot_bases(setup32, 100)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bases32(setup32):
    """All 625 grid snapshots at N=1024."""
    return ex.grid_snapshot_bases(setup32, 625)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
