"""Exact statevector engine.

States are plain complex128 numpy arrays of length ``2**n``; amplitude index
bit ``q`` is qubit ``q``, matching :mod:`niducc.pauli`.
"""
from __future__ import annotations

from functools import lru_cache
import math
import struct
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chem import PauliSum
from .pauli import PauliString

__all__ = [
    "ContractError",
    "HermiticityError",
    "basis_state",
    "apply_pauli",
    "apply_pauli_exponential",
    "pauli_sum_to_sparse",
    "expectation",
    "apply_antihermitian_exponential",
    "taylor_action",
    "ExponentialProduct",
    "analytic_gradient",
    "exact_ground_state",
    "sector_indices",
    "fidelity",
    "dump_state",
    "load_state",
]

DENSE_LIMIT = 4096
MAX_QUBITS = 20
_UNIT = np.array([1, 1j, -1, -1j])


class ContractError(ValueError):
    """Input violates an operation's precondition."""


class HermiticityError(ArithmeticError):
    """Expectation value has an imaginary part the operator cannot produce."""


def basis_state(n: int, bits: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[bits] = 1.0
    return psi


@lru_cache(maxsize=None)
def _indices(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def _parity(v: np.ndarray) -> np.ndarray:
    return np.bitwise_count(v) & 1


@lru_cache(maxsize=4096)
def _action(n: int, x: int, z: int, phase: int) -> tuple[np.ndarray, np.ndarray]:
    """``(perm, ph)`` with ``(P psi)[c] = ph[c] * psi[perm[c]]``."""
    idx = _indices(n)
    perm = idx ^ x
    k = (phase + (x & z).bit_count() + 2 * _parity(perm & z)) & 3
    return perm, _UNIT[k]


def _check_n(state: np.ndarray, n: int) -> None:
    if state.shape != (1 << n,):
        raise ContractError(f"state of length {state.shape[0]} does not match {n} qubits")


def apply_pauli(state: np.ndarray, p: PauliString) -> np.ndarray:
    _check_n(state, p.n)
    perm, ph = _action(p.n, p.x_bits, p.z_bits, p.phase_exp)
    return ph * state[perm]


def apply_pauli_exponential(state: np.ndarray, p: PauliString, theta: float) -> np.ndarray:
    """``exp(i theta P) state = cos(theta) state + i sin(theta) P state``."""
    if p.phase_exp:
        raise ContractError(f"exponentiated string must be phase-free, got {p}")
    _check_n(state, p.n)
    perm, ph = _action(p.n, p.x_bits, p.z_bits, 0)
    return math.cos(theta) * state + (1j * math.sin(theta)) * (ph * state[perm])


def pauli_sum_to_sparse(op: PauliSum) -> sp.csr_matrix:
    """Sparse matrix of a Pauli sum; real dtype when every entry is real."""
    n = op.n
    idx = _indices(n)
    groups: dict[int, np.ndarray] = {}
    for (x, z), c in op.items():
        _, ph = _action(n, x, z, 0)
        d = groups.get(x)
        # row c couples to column c ^ x with weight ph[c]
        groups[x] = c * ph if d is None else d + c * ph
    rows, cols, data = [], [], []
    for x, d in groups.items():
        keep = np.abs(d) > 0
        rows.append(idx[keep])
        cols.append((idx ^ x)[keep])
        data.append(d[keep])
    if not data:
        return sp.csr_matrix((1 << n, 1 << n))
    data = np.concatenate(data)
    if np.all(data.imag == 0):
        data = data.real
    m = sp.csr_matrix((data, (np.concatenate(rows), np.concatenate(cols))), shape=(1 << n, 1 << n))
    m.sum_duplicates()
    return m


def _as_operator(op) -> sp.spmatrix | np.ndarray:
    return pauli_sum_to_sparse(op) if isinstance(op, PauliSum) else op


def expectation(state: np.ndarray, op) -> float:
    """``<psi|H|psi>`` for a Hermitian Pauli sum or matrix."""
    m = _as_operator(op)
    val = np.vdot(state, m @ state)
    if abs(val.imag) > 1e-8:
        raise HermiticityError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def apply_antihermitian_exponential(state: np.ndarray, a, tol: float = 1e-14) -> np.ndarray:
    """``exp(A) state`` for anti-Hermitian ``A`` by a scaled truncated Taylor
    series: ``A/s`` with ``||A/s||_1 <= 1`` is applied ``s`` times and each
    series is cut once a term's norm drops below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(a, PauliSum):
        if not a.is_antihermitian():
            raise ContractError("operator is not anti-Hermitian")
        m = pauli_sum_to_sparse(a)
    else:
        m = sp.csr_matrix(a)
        if m.nnz and abs(m + m.conj().T).max() > 1e-12:
            raise ContractError("operator is not anti-Hermitian")
    out = taylor_action(m, np.asarray(state, dtype=complex), tol)
    norm = np.linalg.norm(out)
    if abs(norm - np.linalg.norm(state)) > 1e-10:
        raise ArithmeticError(f"norm drift {norm - np.linalg.norm(state):.2e} in exponential")
    return out


def taylor_action(m, state: np.ndarray, tol: float = 1e-14, norm1: float | None = None) -> np.ndarray:
    """``exp(m) state`` without input checks; ``m`` is split into ``ceil(||m||_1)``
    steps so each truncated series converges quickly."""
    if norm1 is None:
        norm1 = spla.norm(m, 1) if m.nnz else 0.0
    steps = max(1, math.ceil(norm1))
    m = m / steps
    out = np.array(state, dtype=np.result_type(state, m.dtype))
    for _ in range(steps):
        term = out
        acc = out.copy()
        base = np.linalg.norm(out)
        for j in range(1, 60):
            term = (m @ term) / j
            acc += term
            if np.linalg.norm(term) <= tol * base:
                break
        out = acc
    return out


class ExponentialProduct:
    """Ordered product ``prod_{l=M..1} exp(i theta_l P_l)`` acting on a reference.

    ``ops[0]`` is applied first. Actions of the (few) distinct strings are
    cached, so a layered ansatz reusing one pool costs no extra memory.
    """

    def __init__(self, ops: Sequence[PauliString]):
        if not ops:
            raise ContractError("empty operator list")
        self.n = ops[0].n
        self.ops = list(ops)
        for p in self.ops:
            if p.phase_exp or p.n != self.n:
                raise ContractError(f"operator {p} must be phase-free on {self.n} qubits")
        self._act = [_action(self.n, p.x_bits, p.z_bits, 0) for p in self.ops]

    def __len__(self) -> int:
        return len(self.ops)

    def state(self, theta: Sequence[float], ref: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.ops),):
            raise ContractError(f"expected {len(self.ops)} parameters, got {theta.shape}")
        psi = np.array(ref, dtype=complex)
        for t, (perm, ph) in zip(theta, self._act):
            psi = math.cos(t) * psi + (1j * math.sin(t)) * (ph * psi[perm])
        return psi

    def energy_and_gradient(self, theta, hamiltonian, ref: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Energy, exact gradient and final state in one forward/backward sweep."""
        h = _as_operator(hamiltonian)
        psi = self.state(theta, ref)
        lam = h @ psi
        energy = np.vdot(psi, lam)
        if abs(energy.imag) > 1e-8:
            raise HermiticityError(f"energy has imaginary part {energy.imag:.3e}")
        grad = np.empty(len(self.ops))
        phi = psi.copy()
        for l in range(len(self.ops) - 1, -1, -1):
            perm, ph = self._act[l]
            p_phi = ph * phi[perm]
            # dE/dtheta_l = 2 Re <lam_l| i P_l |phi_l>
            grad[l] = -2.0 * np.vdot(lam, p_phi).imag
            c, s = math.cos(theta[l]), math.sin(theta[l])
            phi = c * phi - (1j * s) * p_phi
            lam = c * lam - (1j * s) * (ph * lam[perm])
        return float(energy.real), grad, psi


def analytic_gradient(theta, ops: Sequence[PauliString], hamiltonian, hf: np.ndarray | int) -> np.ndarray:
    if len(theta) != len(ops):
        raise ContractError(f"{len(theta)} parameters for {len(ops)} operators")
    circuit = ExponentialProduct(ops)
    ref = basis_state(circuit.n, hf) if isinstance(hf, (int, np.integer)) else hf
    return circuit.energy_and_gradient(theta, hamiltonian, ref)[1]


def sector_indices(n: int, n_alpha: int, n_beta: int) -> np.ndarray:
    """Basis indices with the given alpha/beta occupation (interleaved order)."""
    idx = _indices(n)
    alpha = sum(1 << q for q in range(0, n, 2))
    beta = alpha << 1 & ((1 << n) - 1)
    keep = (np.bitwise_count(idx & alpha) == n_alpha) & (np.bitwise_count(idx & beta) == n_beta)
    return idx[keep]


def exact_ground_state(hamiltonian, sector: tuple[int, int] | None = None, n: int | None = None):
    """Lowest eigenpair, optionally restricted to an ``(n_alpha, n_beta)`` sector."""
    if isinstance(hamiltonian, PauliSum):
        n = hamiltonian.n
    elif n is None:
        n = int(round(math.log2(hamiltonian.shape[0])))
    if n > MAX_QUBITS:
        raise ContractError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit limit")
    m = sp.csr_matrix(_as_operator(hamiltonian))
    keep = sector_indices(n, *sector) if sector is not None else _indices(n)
    sub = m[keep][:, keep]
    if len(keep) <= DENSE_LIMIT:
        w, v = scipy.linalg.eigh(sub.toarray())
        e, vec = w[0], v[:, 0]
    else:
        w, v = spla.eigsh(sub, k=1, which="SA", tol=1e-13)
        e, vec = w[0], v[:, 0]
    psi = np.zeros(1 << n, dtype=complex)
    psi[keep] = vec
    psi /= np.linalg.norm(psi)
    return float(e), psi


def fidelity(state: np.ndarray, reference: np.ndarray) -> float:
    if state.shape != reference.shape:
        raise ContractError("states have different dimensions")
    return float(min(1.0, abs(np.vdot(reference, state)) ** 2))


def dump_state(path: str | Path, state: np.ndarray) -> None:
    """Debug dump: uint32 qubit count then little-endian complex128 amplitudes."""
    n = int(round(math.log2(state.shape[0])))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", n))
        fh.write(np.asarray(state, dtype="<c16").tobytes())


def load_state(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<I", raw[:4])
    return np.frombuffer(raw[4:], dtype="<c16", count=1 << n).astype(complex)
