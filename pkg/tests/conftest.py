import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sthawkes.engine import random_catalog
from sthawkes.model import HawkesParams

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_catalog(rng):
    return random_catalog(300, rng, horizon=20.0, extent=2.0)


@pytest.fixture
def params():
    return HawkesParams(0.6, 2.0, 0.4, 0.3, 1.5, area=4.0)


def random_params(rng, variant="constant", area=None):
    """Valid parameters spread over a few orders of magnitude."""
    return HawkesParams(mu0=float(rng.uniform(0.05, 2.0)), tau_t=float(rng.uniform(0.2, 10.0)),
                        xi0=float(rng.uniform(0.05, 1.5)), sigma_x=float(np.exp(rng.uniform(-3, 0.5))),
                        sigma_t=float(rng.uniform(0.2, 5.0)),
                        area=float(area if area is not None else rng.uniform(1.0, 200.0)),
                        variant=variant)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
