"""Electronic-structure input: FCIDUMP ingestion, Jordan-Wigner qubit
Hamiltonians and the Hartree-Fock reference determinant.

Spin orbitals are interleaved: spatial orbital ``i`` maps to qubit ``2i``
(alpha) and ``2i + 1`` (beta).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from pathlib import Path
import io
import re
from typing import Iterable, TextIO

import numpy as np

from .pauli import PauliString, product_phase

__all__ = [
    "MolecularSystem",
    "PauliSum",
    "FcidumpError",
    "ConfigurationError",
    "parse_fcidump",
    "load_fcidump",
    "build_qubit_hamiltonian",
    "hartree_fock_state",
    "jw_ladder",
    "jw_excitation",
    "number_operator",
    "FIXTURE_DIR",
    "fixture_path",
    "load_fixture",
]

PRUNE_TOL = 1e-12
_UNIT = (1, 1j, -1, -1j)


class FcidumpError(ValueError):
    """Malformed FCIDUMP input; the message carries the offending line."""


class ConfigurationError(ValueError):
    """Electron/spin configuration that cannot be realised."""


@dataclass(frozen=True)
class MolecularSystem:
    n_spatial: int
    n_elec: int
    ms2: int
    orbsym: tuple[int, ...]
    core_energy: float
    h: np.ndarray
    v: np.ndarray
    isym: int = 1
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_so(self) -> int:
        return 2 * self.n_spatial

    @property
    def n_alpha(self) -> int:
        return _spin_counts(self.n_elec, self.ms2, self.n_spatial)[0]

    @property
    def n_beta(self) -> int:
        return _spin_counts(self.n_elec, self.ms2, self.n_spatial)[1]

    def irrep(self, spin_orbital: int) -> int:
        """Irrep of a spin orbital as an XOR-group element (label - 1)."""
        return self.orbsym[spin_orbital // 2] - 1


# ---------------------------------------------------------------------------
# FCIDUMP
# ---------------------------------------------------------------------------

_HEADER_FIELD = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z_][A-Za-z0-9_]*\s*=|$)")


def _parse_header(text: str, first_line: int) -> dict[str, list[int]]:
    body = re.sub(r"^\s*&\s*FCI", "", text.strip(), flags=re.IGNORECASE)
    body = re.sub(r"(&\s*END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    body = " ".join(body.split())
    fields: dict[str, list[int]] = {}
    for key, raw in _HEADER_FIELD.findall(body):
        values = [t for t in re.split(r"[,\s]+", raw.strip()) if t]
        try:
            fields[key.upper()] = [int(t) for t in values]
        except ValueError:
            raise FcidumpError(f"line {first_line}: non-integer value for {key.upper()}: {raw.strip()!r}") from None
    return fields


def parse_fcidump(stream: TextIO | str, name: str = "") -> MolecularSystem:
    """Read an FCIDUMP namelist header and integral records.

    Records are ``value i j k l`` with 1-based indices in chemists' notation.
    ``i j k l = 0 0 0 0`` is the core energy and ``k = l = 0`` a one-electron
    integral; ``i 0 0 0`` records (orbital energies) are ignored.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()

    header, start = [], None
    for idx, line in enumerate(lines):
        header.append(line)
        if re.search(r"(&\s*END\b|^\s*/\s*$)", line, flags=re.IGNORECASE):
            start = idx + 1
            break
    if start is None:
        raise FcidumpError("line 1: namelist header is not terminated by &END or /")
    fields = _parse_header(" ".join(header), 1)

    for required in ("NORB", "NELEC"):
        if required not in fields:
            raise FcidumpError(f"line 1: header field {required} is missing")
    norb = fields["NORB"][0]
    nelec = fields["NELEC"][0]
    ms2 = fields.get("MS2", [0])[0]
    isym = fields.get("ISYM", [1])[0]
    orbsym = tuple(fields.get("ORBSYM", [1] * norb))
    if norb < 1:
        raise FcidumpError(f"line 1: NORB must be positive, got {norb}")
    if len(orbsym) != norb:
        raise FcidumpError(f"line 1: ORBSYM has {len(orbsym)} entries for NORB={norb}")

    h = np.zeros((norb, norb))
    v = np.zeros((norb, norb, norb, norb))
    core = 0.0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpError(f"line {lineno}: expected 'value i j k l', got {line.strip()!r}")
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError:
            raise FcidumpError(f"line {lineno}: non-numeric record {line.strip()!r}") from None
        if not all(0 <= t <= norb for t in (i, j, k, l)):
            raise FcidumpError(f"line {lineno}: orbital index out of range 0..{norb}: {line.strip()!r}")
        if i == j == k == l == 0:
            core = value
        elif k == 0 and l == 0:
            if j == 0:
                continue
            h[i - 1, j - 1] = h[j - 1, i - 1] = value
        else:
            if 0 in (i, j, k, l):
                raise FcidumpError(f"line {lineno}: malformed two-electron indices {line.strip()!r}")
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for p, q, r, s in ((a, b, c, d), (b, a, c, d), (a, b, d, c), (b, a, d, c)):
                v[p, q, r, s] = v[r, s, p, q] = value

    return MolecularSystem(norb, nelec, ms2, orbsym, core, h, v, isym=isym, name=name)


def load_fcidump(path: str | Path) -> MolecularSystem:
    path = Path(path)
    with path.open() as fh:
        system = parse_fcidump(fh, name=path.stem)
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        import json

        object.__setattr__(system, "meta", json.loads(sidecar.read_text()))
    return system


FIXTURE_DIR = Path(__file__).parent / "data" / "fixtures"


def fixture_path(molecule: str, bond_length: float) -> Path:
    """Bundled STO-3G FCIDUMP for ``molecule`` at ``bond_length`` Angstrom."""
    return FIXTURE_DIR / f"{molecule}_r{bond_length:.3f}.fcidump"


def load_fixture(molecule: str, bond_length: float) -> MolecularSystem:
    path = fixture_path(molecule, bond_length)
    if not path.exists():
        known = sorted(p.stem for p in FIXTURE_DIR.glob("*.fcidump"))
        raise FileNotFoundError(f"no fixture {path.name}; available: {', '.join(known)}")
    return load_fcidump(path)


# ---------------------------------------------------------------------------
# Pauli sums
# ---------------------------------------------------------------------------


class PauliSum:
    """Linear combination of phase-free Pauli strings with complex weights.

    Terms are stored as ``{(x_bits, z_bits): coefficient}``; the public
    :attr:`terms` view folds a purely imaginary weight into the string's phase
    so every listed coefficient is real.
    """

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: dict[tuple[int, int], complex] | None = None):
        self.n = n
        self._terms: dict[tuple[int, int], complex] = dict(terms or {})

    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[complex, PauliString]]) -> "PauliSum":
        out: dict[tuple[int, int], complex] = {}
        for c, p in terms:
            if p.n != n:
                raise ValueError(f"term on {p.n} qubits in a {n}-qubit sum")
            out[p.key] = out.get(p.key, 0) + c * _UNIT[p.phase_exp]
        return cls(n, out)

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n, {(0, 0): coeff})

    # -- views ---------------------------------------------------------
    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self.terms)

    def coefficient(self, p: PauliString) -> complex:
        return self._terms.get(p.key, 0) * _UNIT[(-p.phase_exp) & 3]

    @property
    def terms(self) -> list[tuple[float, PauliString]]:
        out = []
        for (x, z), c in sorted(self._terms.items()):
            if abs(c.imag) <= abs(c.real) * 1e-14 or c.imag == 0:
                out.append((float(c.real), PauliString(self.n, x, z)))
            elif abs(c.real) <= abs(c.imag) * 1e-14:
                out.append((float(c.imag), PauliString(self.n, x, z, 1)))
            else:
                raise ValueError(f"coefficient {c} of {PauliString(self.n, x, z)} is neither real nor imaginary")
        return out

    # -- algebra -------------------------------------------------------
    def copy(self) -> "PauliSum":
        return PauliSum(self.n, self._terms)

    def simplify(self, tol: float = PRUNE_TOL) -> "PauliSum":
        return PauliSum(self.n, {k: c for k, c in self._terms.items() if abs(c) >= tol})

    def adjoint(self) -> "PauliSum":
        return PauliSum(self.n, {k: complex(c).conjugate() for k, c in self._terms.items()})

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0) + c
        return PauliSum(self.n, out)

    def __neg__(self) -> "PauliSum":
        return PauliSum(self.n, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            out: dict[tuple[int, int], complex] = {}
            for (x1, z1), c1 in self._terms.items():
                for (x2, z2), c2 in other._terms.items():
                    k = (x1 ^ x2, z1 ^ z2)
                    out[k] = out.get(k, 0) + c1 * c2 * _UNIT[product_phase(x1, z1, x2, z2)]
            return PauliSum(self.n, out)
        return PauliSum(self.n, {k: c * other for k, c in self._terms.items()})

    __rmul__ = __mul__

    def commutator(self, other: "PauliSum") -> "PauliSum":
        return (self * other - other * self).simplify()

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(complex(c).imag) <= tol for c in self._terms.values())

    def is_antihermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(complex(c).real) <= tol for c in self._terms.values())

    def __repr__(self) -> str:
        return f"PauliSum(n={self.n}, terms={len(self)})"


# ---------------------------------------------------------------------------
# Jordan-Wigner
# ---------------------------------------------------------------------------


def jw_ladder(p: int, dagger: bool, n: int) -> PauliSum:
    """``a_p^dagger = (X_p - iY_p)/2 Z_{<p}``, ``a_p = (X_p + iY_p)/2 Z_{<p}``."""
    chain = (1 << p) - 1
    bit = 1 << p
    return PauliSum(n, {(bit, chain): 0.5, (bit, chain | bit): (-0.5j if dagger else 0.5j)})


def _ladder_product(ops: Iterable[tuple[int, bool]], n: int, cache: dict) -> PauliSum:
    factors = []
    for p, dag in ops:
        key = (p, dag)
        if key not in cache:
            cache[key] = jw_ladder(p, dag, n)
        factors.append(cache[key])
    return reduce(lambda a, b: a * b, factors)


def jw_excitation(creators: tuple[int, ...], annihilators: tuple[int, ...], n: int) -> PauliSum:
    """Anti-Hermitian generator ``T - T^dagger`` for
    ``T = a+_{c0} a+_{c1} ... a_{a1} a_{a0}`` (annihilators applied first-to-last
    in the order given).
    """
    cache: dict = {}
    ops = [(p, True) for p in creators] + [(p, False) for p in reversed(annihilators)]
    t = _ladder_product(ops, n, cache)
    return (t - t.adjoint()).simplify()


def number_operator(n: int) -> PauliSum:
    terms = {(0, 0): n / 2}
    for q in range(n):
        terms[(0, 1 << q)] = -0.5
    return PauliSum(n, terms)


def build_qubit_hamiltonian(system: MolecularSystem, tol: float = PRUNE_TOL) -> PauliSum:
    """Jordan-Wigner image of
    ``sum h_pq a+_p a_q + 1/2 sum (pq|rs) a+_p a+_r a_s a_q + E_core``."""
    nso = system.n_so
    ns = system.n_spatial
    h, v = system.h, system.v
    cache: dict = {}
    acc: dict[tuple[int, int], complex] = {(0, 0): system.core_energy}

    def add(op: PauliSum, coeff: float):
        for k, c in op._terms.items():
            acc[k] = acc.get(k, 0) + coeff * c

    for i, j in product(range(ns), repeat=2):
        if h[i, j] == 0.0:
            continue
        for s in (0, 1):
            add(_ladder_product([(2 * i + s, True), (2 * j + s, False)], nso, cache), h[i, j])

    for i, j, k, l in product(range(ns), repeat=4):
        g = v[i, j, k, l]
        if g == 0.0:
            continue
        for s1, s2 in product((0, 1), repeat=2):
            p, q, r, t = 2 * i + s1, 2 * j + s1, 2 * k + s2, 2 * l + s2
            if p == r or q == t:
                continue
            add(_ladder_product([(p, True), (r, True), (t, False), (q, False)], nso, cache), 0.5 * g)

    cleaned = {}
    for key, c in acc.items():
        c = complex(c)
        if abs(c) < tol:
            continue
        if abs(c.imag) > 1e-10:
            raise ArithmeticError(f"non-Hermitian Hamiltonian term {key}: {c}")
        cleaned[key] = c.real
    return PauliSum(nso, cleaned)


# ---------------------------------------------------------------------------
# Reference state
# ---------------------------------------------------------------------------


def _spin_counts(n_elec: int, ms2: int, n_spatial: int) -> tuple[int, int]:
    if (n_elec + ms2) % 2:
        raise ConfigurationError(f"NELEC={n_elec} and MS2={ms2} give a non-integer alpha count")
    na, nb = (n_elec + ms2) // 2, (n_elec - ms2) // 2
    if na < 0 or nb < 0 or na > n_spatial or nb > n_spatial:
        raise ConfigurationError(f"cannot place {na} alpha and {nb} beta electrons in {n_spatial} orbitals")
    return na, nb


def hartree_fock_state(system: MolecularSystem) -> int:
    """Occupation bitstring filling the lowest alpha and beta spin orbitals."""
    na, nb = _spin_counts(system.n_elec, system.ms2, system.n_spatial)
    bits = 0
    for i in range(na):
        bits |= 1 << (2 * i)
    for i in range(nb):
        bits |= 1 << (2 * i + 1)
    return bits


def spin_masks(n_qubits: int) -> tuple[int, int]:
    """Masks selecting the alpha and beta qubits."""
    alpha = sum(1 << q for q in range(0, n_qubits, 2))
    return alpha, alpha << 1 & ((1 << n_qubits) - 1)
