import numpy as np
import pytest

from niducc.chem import build_qubit_hamiltonian, hartree_fock_state, load_fixture

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0 + 0j, -1.0]),
}
ACCEPTANCE_LINES: list[str] = []


def dense(p):
    """Dense matrix of a PauliString; qubit 0 is the least significant bit."""
    m = np.array([[1.0 + 0j]])
    for q in range(p.n):
        m = np.kron(_PAULI[p.label(q)], m)
    return (1, 1j, -1, -1j)[p.phase_exp] * m


@pytest.fixture(scope="session")
def h2():
    s = load_fixture("H2", 0.735)
    return s, build_qubit_hamiltonian(s), hartree_fock_state(s)


@pytest.fixture(scope="session")
def h4():
    s = load_fixture("H4", 1.0)
    return s, build_qubit_hamiltonian(s), hartree_fock_state(s)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
