import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spincavity import SystemParams
from spincavity.dynamics import Ensemble

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def dimless():
    return SystemParams(kappa=4.0)


@pytest.fixture
def si():
    return SystemParams(kappa=9.8e5, mode="SI")


def offset_ensemble(n=41, span=30.0, g=1.0, total=1.0, S=None):
    """Evenly spaced offsets at the south pole, weights summing to ``total``."""
    return Ensemble(np.linspace(-span, span, n), g, total / n, S)


def random_bloch(rng, n, radius=0.5):
    v = rng.normal(size=(n, 3))
    return radius * v / np.linalg.norm(v, axis=1)[:, None]


HALF_PI = 0.5 * math.pi


ACCEPTANCE = []


def report(number, ok, detail):
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
