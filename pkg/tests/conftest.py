import numpy as np
import pytest
from hypothesis import settings

from krflow.boxmotion import default_automorphisms

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def basis():
    return default_automorphisms()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_trace_free(rng, scale=1.0):
    A = rng.standard_normal((3, 3)) * scale
    return A - np.trace(A) / 3.0 * np.eye(3)


def well_conditioned(rng):
    while True:
        S = rng.standard_normal((3, 3))
        if np.linalg.cond(S) < 20:
            return S


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance verdicts")
        for line in lines:
            terminalreporter.write_line(line)
