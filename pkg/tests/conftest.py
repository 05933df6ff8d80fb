import numpy as np
import pytest

from esmgauntlet.grid import GridSpec
from esmgauntlet.fixtures import synthetic_climate


@pytest.fixture(scope="session")
def grid64():
    return GridSpec.regular(64, 128)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec.regular(8, 16)


@pytest.fixture(scope="session")
def climate(small_grid):
    return synthetic_climate(small_grid, n_steps=40, years=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one verdict line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        verdict = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES[props["criterion"]] = (
            f"criterion {props['criterion']:>2}: {verdict}  ({report.duration:.2f} s)  {props.get('detail', '')}"
        )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for crit in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[crit])
