import numpy as np
import pytest

from odyn.overlaps import OverlapState, overlaps_of

_VERDICTS = {}


def random_state(rng, p=3, k=2, d=7, spread=(0.3, 1.2)):
    """Overlaps of a Gaussian student (rows rescaled) and a Gaussian teacher."""
    W = rng.standard_normal((p, d)) * rng.uniform(*spread, size=(p, 1))
    Wt = rng.standard_normal((k, d))
    return overlaps_of(W, Wt)


def banded_state():
    """A fixed p=4, k=2 overlap state with mild student correlations."""
    Q = np.array([[0.5, 0.1, 0.0, 0.0],
                  [0.1, 0.5, 0.05, 0.0],
                  [0.0, 0.05, 0.5, 0.1],
                  [0.0, 0.0, 0.1, 0.5]])
    M = np.array([[0.2, 0.0], [0.0, 0.2], [0.15, 0.05], [0.05, 0.15]])
    return OverlapState(Q, M, np.eye(2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""
    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
