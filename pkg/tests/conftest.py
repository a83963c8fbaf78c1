"""Shared fixtures and the acceptance summary reporter."""

import numpy as np
import pytest

from sqgtrack import Grid, ScalarField

ACCEPTANCE_RESULTS = []


def record_criterion(number, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")


def cmt_field(grid: Grid) -> ScalarField:
    """Hyperbolic-saddle initial data sin x1 sin x2 + cos x2."""
    return ScalarField.from_function(
        grid, lambda x1, x2: np.sin(x1) * np.sin(x2) + np.cos(x2)
    )


def periodic_bump(grid: Grid, sigma: float = 0.5) -> ScalarField:
    """Radially symmetric bump at (pi, pi), periodicized by image sums."""

    def fn(x1, x2):
        out = np.zeros_like(x1)
        for mx in (-1, 0, 1):
            for my in (-1, 0, 1):
                out += np.exp(
                    -((x1 - np.pi - 2 * np.pi * mx) ** 2
                      + (x2 - np.pi - 2 * np.pi * my) ** 2) / (2 * sigma**2)
                )
        return out

    return ScalarField.from_function(grid, fn)


@pytest.fixture
def cmt64():
    return cmt_field(Grid(64))


@pytest.fixture
def cmt128():
    return cmt_field(Grid(128))


@pytest.fixture(scope="session")
def bump256():
    return periodic_bump(Grid(256))
