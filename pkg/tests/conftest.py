"""Shared expensive fixtures and the acceptance summary printed after the run."""

from __future__ import annotations

import time

import numpy as np
import pytest

from mcflab.boundary import BoundaryMotionSpec, solve_boundary_flow
from mcflab.domain import DomainSpec
from mcflab.regularize import lambda_ladder

LADDER = [4.0, 8.0, 16.0, 32.0, 64.0]

# criterion id -> list of (passed, message); filled by test_acceptance.py
ACCEPTANCE: dict[str, list[tuple[bool, str]]] = {}


def record(criterion: str, passed: bool, message: str) -> None:
    line = f"{criterion} {'PASS' if passed else 'FAIL'}: {message}"
    print(line)
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), message))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        for passed, msg in ACCEPTANCE[key]:
            terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}: {msg}")


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def _timed(fn, *args, **kwargs) -> Timed:
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return Timed(out, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def disk_ladder():
    """Unit disk, 256 nodes across, full ladder."""
    d = DomainSpec("disk", 2)
    return _timed(lambda_ladder, d, d.default_grid(256), LADDER)


@pytest.fixture(scope="session")
def ball_ladder():
    """Unit ball as a body of revolution, 128 radial nodes."""
    d = DomainSpec("disk", 3)
    return _timed(lambda_ladder, d, d.default_grid(128), LADDER)


@pytest.fixture(scope="session")
def dumbbell_ladder():
    """Default dumbbell on a 192 x 1081 meridian grid."""
    d = DomainSpec("axisym_dumbbell", 3)
    return _timed(lambda_ladder, d, d.default_grid(192), LADDER)


@pytest.fixture(scope="session")
def lens_flow():
    """Static-boundary lens, 256 nodes across, horizon lambda^2."""
    spec = BoundaryMotionSpec(DomainSpec("lens", 2))
    grid = spec.domain.default_grid(256)
    return _timed(solve_boundary_flow, spec, grid, [8.0, 16.0, 32.0, 64.0])


def exact_disk_u(grid, n=2, radius=1.0):
    X0, X1 = grid.coords()
    return (radius ** 2 - X0 ** 2 - X1 ** 2) / (2.0 * (n - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
