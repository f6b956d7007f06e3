import numpy as np
import pytest
from hypothesis import settings

from molqec import labeling, spectrum
from molqec.qecsim import LabeledSystem
from molqec.spinsys import SystemParams

settings.register_profile("molqec", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("molqec")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def heisenberg_params(J: float) -> SystemParams:
    """Three bare S=1/2 spins with only the exchange term."""
    return SystemParams(electron_spin=0.5, nuclear_spin=0.0, J_ex=J)


def kambe_levels(J: float) -> np.ndarray:
    """E = -J [S(S+1) - 3/4 - A(A+1)] for (S, A) in {(1/2,0), (1/2,1), (3/2,1)}."""
    out = []
    for S, A, g in ((0.5, 0, 2), (0.5, 1, 2), (1.5, 1, 4)):
        out += [-J * (S * (S + 1) - 0.75 - A * (A + 1))] * g
    return np.sort(out)


@pytest.fixture(scope="session")
def cu():
    return SystemParams.preset("Cu")


@pytest.fixture(scope="session")
def tb():
    return SystemParams.preset("Tb")


@pytest.fixture(scope="session")
def cu_system(cu):
    return LabeledSystem.build(cu)


@pytest.fixture(scope="session")
def cu_electronic(cu):
    spec = labeling.electronic_spectrum(cu)
    return spec, labeling.electronic_labeling(spec)


@pytest.fixture(scope="session")
def tb_spectrum(tb):
    return spectrum.solve(tb)


@pytest.fixture(scope="session")
def tb_full(tb):
    return spectrum.diagonalize(__import__("molqec").build_hamiltonian(tb), tb.sites)
