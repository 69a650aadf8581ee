import numpy as np
import pytest

from ramanspin.drive import solve_sidebands_1d
from ramanspin.hamiltonian import build_sector, hs_fourier, hs_profile


def hs_series(N):
    """Half-filling HS series at delta = 1 with J_1 = 1."""
    sol = solve_sidebands_1d(hs_profile(N, np.sin(np.pi / N) ** 2))
    return hs_fourier(N, sol.drive(), 1.0, build_sector(N, N // 2))


@pytest.fixture(scope="session")
def hs6():
    return hs_series(6)


@pytest.fixture(scope="session")
def hs8():
    return hs_series(8)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and echo it."""
    def rec(n, ok, text):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return rec


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
