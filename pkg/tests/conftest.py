import numpy as np
import pytest

from ddsensor.generators import random_stable_system
from ddsensor.lti_core import ExcitationConfig, SelectionIndex, generate_excitation, simulate


def run_data(sys, hat, evaluated=None, N=2, seed=0, extra=0, samples=None):
    """Simulate a trajectory long enough for the default regressor sample count."""
    evaluated = range(1, sys.p + 1) if evaluated is None else evaluated
    r = len(hat)
    d = N * (sys.m + r)
    k = samples or d * (d + 1)
    u = generate_excitation(ExcitationConfig(seed=seed, horizon=N + k + 1 + extra), sys.m)
    return simulate(sys, u, SelectionIndex.of(hat, sys.p), SelectionIndex.of(evaluated, sys.p))


@pytest.fixture
def small_system():
    return random_stable_system(4, 2, 5, seed=11, rho=0.85)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    """Record one pass/fail line for the acceptance summary."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
