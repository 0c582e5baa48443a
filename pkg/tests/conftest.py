import logging
import math

import numpy as np
import pytest

from supershear.assembly import build_approximation
from supershear.config import RunConfig
from supershear.domain import PhysicalParams, build_grid, quartic_flow
from supershear.runner import run_cases

# pass/fail lines of the acceptance criteria, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report_line():
    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {name} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR)


def unit_params(**kw) -> PhysicalParams:
    """Parameters with sound speed exactly 1 (gamma = 2, a = 1/2)."""
    return PhysicalParams(**{"gamma": 2.0, "a": 0.5, **kw})


def uniform_grid(L: float, n1: int, n2: int):
    from supershear.domain import Grid
    return Grid(np.linspace(0.0, L, n1 + 1), np.linspace(0.0, 2.0, n2 + 1), "uniform")


@pytest.fixture(scope="session")
def small_bundle():
    """Default profile at eps = 0.1 on a 32 x 64 grid."""
    params = PhysicalParams(eps=0.1)
    grid = build_grid(params, 32, 64)
    return build_approximation(params, quartic_flow(), grid)


@pytest.fixture(scope="session")
def default_cfg() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def sweep_cases(default_cfg):
    """The default eps sweep, solved once for all acceptance criteria."""
    return run_cases(default_cfg, default_cfg.sweep)


def l2(f, grid) -> float:
    return math.sqrt(float(np.sum(grid.weights() * f * f)))
