import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynlock.sequence import builtin_dsl4, builtin_wahuha
from dynlock.spinops import SpinSystem
from dynlock.systems import builtin_system

settings.register_profile("dynlock", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dynlock")


@pytest.fixture(scope="session")
def dsl4():
    return builtin_dsl4(20e-6)


@pytest.fixture(scope="session")
def wahuha():
    return builtin_wahuha(20e-6)


@pytest.fixture(scope="session")
def cluster6():
    return builtin_system("cluster6")


@pytest.fixture(scope="session")
def cluster4():
    return builtin_system("cluster4")


@pytest.fixture(scope="session")
def one_spin():
    return SpinSystem(("H",), np.zeros((1, 1)))


def random_dipolar(rng, n, scale=1000.0):
    d = rng.normal(0, scale, (n, n))
    d = np.triu(d, 1)
    return d + d.T


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {}) if mod else {}
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
            terminalreporter.write_line(lines[key])
