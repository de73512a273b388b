import warnings

import numpy as np
import pytest

from heisflow.discrete import GridSpec, assemble
from heisflow.kernels import KernelSpec


@pytest.fixture(scope="session")
def small_dirichlet():
    g = GridSpec(1, 2.0, 4.0, 7, 7, "dirichlet_zero")
    return assemble(g, KernelSpec.pure_power(1.0))


@pytest.fixture(scope="session")
def small_censored():
    g = GridSpec(1, 2.0, 4.0, 7, 7, "censored")
    return assemble(g, KernelSpec.pure_power(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _quiet_subcritical_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=r"m = .* <= m\*")
        yield


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
