import numpy as np
import pytest
import scipy.linalg

from niducc.chem import PauliSum
from niducc.pauli import PauliString
from niducc.sim import (
    ContractError,
    ExponentialProduct,
    HermiticityError,
    analytic_gradient,
    apply_antihermitian_exponential,
    apply_pauli,
    apply_pauli_exponential,
    basis_state,
    dump_state,
    exact_ground_state,
    expectation,
    fidelity,
    load_state,
    pauli_sum_to_sparse,
    sector_indices,
)

from conftest import dense


def random_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_antihermitian(rng, n, terms=12):
    labels = ["".join(rng.choice(list("IXYZ"), n)) for _ in range(terms)]
    return PauliSum.from_terms(n, [(1j * rng.normal(), PauliString.from_label(lab)) for lab in labels])


class TestPauliAction:
    def test_apply_matches_dense(self):
        rng = np.random.default_rng(1)
        psi = random_state(rng, 3)
        for lab in ["XYZ", "-iZIY", "IIX"]:
            p = PauliString.from_label(lab)
            assert np.allclose(apply_pauli(psi, p), dense(p) @ psi)

    def test_exponential_matches_expm(self):
        rng = np.random.default_rng(2)
        psi = random_state(rng, 3)
        p = PauliString.from_label("YXZ")
        out = apply_pauli_exponential(psi, p, 0.37)
        assert np.allclose(out, scipy.linalg.expm(0.37j * dense(p)) @ psi)

    def test_wrong_length(self):
        with pytest.raises(ContractError):
            apply_pauli(np.ones(4), PauliString.from_label("XXX"))

    def test_sparse_matches_dense_sum(self):
        rng = np.random.default_rng(3)
        a = random_antihermitian(rng, 3)
        ref = sum(c * dense(p) for c, p in a.terms)
        assert np.allclose(pauli_sum_to_sparse(a).toarray(), ref)


class TestExponential:
    def test_random_antihermitian(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = random_antihermitian(rng, 4)
            psi = random_state(rng, 4)
            ref = scipy.linalg.expm(pauli_sum_to_sparse(a).toarray()) @ psi
            assert np.max(np.abs(apply_antihermitian_exponential(psi, a) - ref)) < 1e-10

    def test_large_norm(self):
        rng = np.random.default_rng(5)
        a = random_antihermitian(rng, 3) * 20.0
        psi = random_state(rng, 3)
        ref = scipy.linalg.expm(pauli_sum_to_sparse(a).toarray()) @ psi
        assert np.max(np.abs(apply_antihermitian_exponential(psi, a) - ref)) < 1e-10

    def test_rejects_hermitian(self):
        h = PauliSum.from_terms(1, [(1.0, PauliString.from_label("X"))])
        with pytest.raises(ContractError):
            apply_antihermitian_exponential(basis_state(1, 0), h)

    def test_zero_operator(self):
        psi = basis_state(2, 1)
        assert np.allclose(apply_antihermitian_exponential(psi, np.zeros((4, 4))), psi)


class TestGradient:
    def test_matches_finite_differences(self, h4):
        system, h, hf = h4
        rng = np.random.default_rng(6)
        ops = [PauliString.from_label(lab) for lab in ["XXXY", "YXXX", "IXIY", "XIYI", "XZYI"]]
        ref = basis_state(8, hf)
        m = pauli_sum_to_sparse(h)
        ops8 = [PauliString.from_label("IIII" + p.to_label()) for p in ops]
        circuit = ExponentialProduct(ops8)
        theta = rng.uniform(-1, 1, len(ops8))
        _, g, _ = circuit.energy_and_gradient(theta, m, ref)
        step = 1e-5
        fd = np.empty_like(g)
        for i in range(len(theta)):
            d = np.zeros_like(theta)
            d[i] = step
            fd[i] = (expectation(circuit.state(theta + d, ref), m) - expectation(circuit.state(theta - d, ref), m)) / (2 * step)
        assert np.allclose(g, fd, atol=1e-8)
        assert np.allclose(analytic_gradient(theta, ops8, m, hf), g)

    def test_state_ordering(self):
        # ops[0] acts first
        a, b = PauliString.from_label("XI"), PauliString.from_label("ZX")
        circuit = ExponentialProduct([a, b])
        psi = circuit.state([0.3, 0.5], basis_state(2, 0))
        ref = scipy.linalg.expm(0.5j * dense(b)) @ scipy.linalg.expm(0.3j * dense(a)) @ basis_state(2, 0)
        assert np.allclose(psi, ref)

    def test_parameter_count_checked(self):
        circuit = ExponentialProduct([PauliString.from_label("XY")])
        with pytest.raises(ContractError):
            circuit.state([0.1, 0.2], basis_state(2, 0))

    def test_phase_rejected(self):
        with pytest.raises(ContractError):
            ExponentialProduct([PauliString.from_label("iXY")])


class TestGroundState:
    def test_sector_restricted(self, h2):
        system, h, _ = h2
        e, psi = exact_ground_state(h, (1, 1))
        assert e == pytest.approx(system.meta["fci_energy"], abs=1e-10)
        assert np.isclose(np.linalg.norm(psi), 1.0)
        assert set(np.flatnonzero(np.abs(psi) > 1e-12)) <= set(sector_indices(4, 1, 1))

    def test_sector_indices(self):
        assert sorted(sector_indices(4, 1, 1)) == [3, 6, 9, 12]

    def test_nonhermitian_expectation(self):
        a = PauliSum.from_terms(1, [(1j, PauliString.from_label("Z"))])
        with pytest.raises(HermiticityError):
            expectation(basis_state(1, 0), a)

    def test_fidelity(self):
        assert fidelity(basis_state(2, 1), basis_state(2, 1)) == 1.0
        assert fidelity(basis_state(2, 1), basis_state(2, 2)) == 0.0


class TestStateDump:
    def test_round_trip(self, tmp_path):
        psi = random_state(np.random.default_rng(7), 3)
        path = tmp_path / "psi.bin"
        dump_state(path, psi)
        assert path.stat().st_size == 4 + 16 * 8
        assert np.array_equal(load_state(path), psi)
