import numpy as np
import pytest

from floquet_bands.bands import MHZ
from floquet_bands.hamiltonians import PhaseModTLS

# filled by tests/test_acceptance.py; printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def resonant_tls():
    """Omega = w_m = 2pi 3 MHz, phi = 0; modulation strength set per test."""
    w = 3 * MHZ

    def make(index: float, phi: float = 0.0, **kw) -> PhaseModTLS:
        return PhaseModTLS(w, 0.5 * index * w, w, phi, **kw)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
