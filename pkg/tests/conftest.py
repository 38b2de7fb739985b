import numpy as np
import pytest

from nvaqs.bathgen import LatticeSpec, default_bath, generate_lattice_sites

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def bath():
    return default_bath()


@pytest.fixture(scope="session")
def lattice_sites():
    return generate_lattice_sites(LatticeSpec())


@pytest.fixture(scope="session")
def grid():
    return np.linspace(0.0, 20.0, 401)


@pytest.fixture
def report():
    """Record one acceptance line; it is echoed in the terminal summary."""

    def _report(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
