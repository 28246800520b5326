"""Starter selection: fermionic pre-screening of double excitations and their
conversion into symmetry-preserving odd-Y Pauli strings."""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Iterable, Sequence

from .chem import ConfigurationError, MolecularSystem, PauliSum, jw_excitation, spin_masks
from .pauli import PauliString, apply_to_basis, popcount

__all__ = [
    "DoubleExcitation",
    "Starter",
    "StateError",
    "prescreen_doubles",
    "all_doubles",
    "select_dominant",
    "paulis_from_double",
    "symmetry_filter",
    "hf_commutator",
    "spin_complement",
    "one_per_excitation",
    "format_starters",
    "parse_starters",
]


class StateError(RuntimeError):
    """An operation needs data that has not been computed yet."""


@dataclass(frozen=True)
class DoubleExcitation:
    """``a+_k a+_l a_j a_i`` on spin orbitals, occupied ``i<j`` to virtual ``k<l``."""

    i: int
    j: int
    k: int
    l: int
    v: float
    t_star: float | None = None

    @property
    def indices(self) -> tuple[int, int, int, int]:
        return (self.i, self.j, self.k, self.l)

    @property
    def mask(self) -> int:
        return (1 << self.i) | (1 << self.j) | (1 << self.k) | (1 << self.l)

    def with_amplitude(self, t: float) -> "DoubleExcitation":
        return replace(self, t_star=float(t))


@dataclass(frozen=True)
class Starter:
    pauli: PauliString
    strength: float
    source: DoubleExcitation | None = None

    def __str__(self) -> str:
        return f"{self.pauli.to_label()} {self.strength:.12e}"


def _closed_shell(system: MolecularSystem) -> None:
    if system.n_alpha != system.n_beta:
        raise ConfigurationError(f"open-shell reference (MS2={system.ms2}) is not supported by screening")


def antisymmetrized(system: MolecularSystem, i: int, j: int, k: int, l: int) -> float:
    """``<ij||kl>`` over spin orbitals, from chemists' spatial integrals."""
    v = system.v
    out = 0.0
    if i % 2 == k % 2 and j % 2 == l % 2:
        out += v[i // 2, k // 2, j // 2, l // 2]
    if i % 2 == l % 2 and j % 2 == k % 2:
        out -= v[i // 2, l // 2, j // 2, k // 2]
    return out


def all_doubles(system: MolecularSystem, hf: int | None = None) -> list[DoubleExcitation]:
    """Every S_z-conserving occupied-pair to virtual-pair double, with ``<ij||kl>``."""
    from .chem import hartree_fock_state

    _closed_shell(system)
    hf = hartree_fock_state(system) if hf is None else hf
    occ = [q for q in range(system.n_so) if hf >> q & 1]
    vir = [q for q in range(system.n_so) if not hf >> q & 1]
    out = []
    for i, j in combinations(occ, 2):
        for k, l in combinations(vir, 2):
            if sorted((i % 2, j % 2)) != sorted((k % 2, l % 2)):
                continue
            out.append(DoubleExcitation(i, j, k, l, antisymmetrized(system, i, j, k, l)))
    return out


def prescreen_doubles(system: MolecularSystem, epsilon: float = 1e-2) -> list[DoubleExcitation]:
    """Doubles with ``|v_ijkl| >= epsilon`` in lexicographic index order."""
    if not epsilon > 0:
        raise ValueError(f"threshold must be positive, got {epsilon}")
    return [d for d in all_doubles(system) if abs(d.v) >= epsilon]


def select_dominant(doubles: Iterable[DoubleExcitation], epsilon: float = 1e-3) -> list[DoubleExcitation]:
    """Keep doubles with ``|v * t*| >= epsilon`` (order preserved)."""
    if not epsilon > 0:
        raise ValueError(f"threshold must be positive, got {epsilon}")
    out = []
    for d in doubles:
        if d.t_star is None:
            raise StateError(f"excitation {d.indices} has no optimized amplitude")
        if abs(d.v * d.t_star) >= epsilon:
            out.append(d)
    return out


def paulis_from_double(exc: DoubleExcitation, n: int) -> list[PauliString]:
    """The eight odd-Y strings in the Jordan-Wigner image of ``T - T+``."""
    gen = jw_excitation((exc.k, exc.l), (exc.i, exc.j), n)
    strings = [PauliString(n, x, z) for (x, z), _ in gen.items()]
    return sorted(strings, key=lambda p: p.to_label())


def hf_commutator(hamiltonian: PauliSum, p: PauliString, hf: int) -> complex:
    """``<HF|[H, P]|HF>``."""
    target, ph = apply_to_basis(p, hf)
    if target == hf:
        # diagonal P commutes with the diagonal part seen by |HF>
        return 0.0
    amp = 0.0
    flip = hf ^ target
    for (x, z), c in hamiltonian.items():
        if x != flip:
            continue
        # <HF| P_k |target>
        k = (x & z).bit_count() + 2 * popcount(target & z)
        amp += c * (1, 1j, -1, -1j)[k & 3]
    h_p = amp * ph  # <HF|H P|HF>
    return 2j * complex(h_p).imag


def spin_complement(p: PauliString) -> PauliString:
    """Swap alpha and beta qubits (``2i <-> 2i+1``)."""
    alpha, beta = spin_masks(p.n)

    def swap(m: int) -> int:
        return ((m & alpha) << 1) | ((m & beta) >> 1)

    return PauliString(p.n, swap(p.x_bits), swap(p.z_bits), p.phase_exp)


def _passes_structure(p: PauliString, system: MolecularSystem, hf: int) -> bool:
    if p.y_count % 2 == 0:
        return False
    # (c) double rank
    if popcount(p.x_bits) != 4:
        return False
    # (a) particle number and S_z
    alpha, beta = spin_masks(p.n)
    new = hf ^ p.x_bits
    if popcount(new & alpha) != popcount(hf & alpha) or popcount(new & beta) != popcount(hf & beta):
        return False
    # (b) spatial irrep of the flipped orbitals
    irrep = 0
    x = p.x_bits
    while x:
        q = (x & -x).bit_length() - 1
        irrep ^= system.irrep(q)
        x &= x - 1
    return irrep == 0


def symmetry_filter(
    paulis: Sequence[PauliString | tuple[PauliString, DoubleExcitation]],
    system: MolecularSystem,
    hamiltonian: PauliSum,
    hf: int,
    strength_epsilon: float = 1e-3,
    weak: bool = False,
) -> list[Starter]:
    """Keep strings whose action on ``|HF>`` respects N, S_z, the point group
    and double rank, and whose HF commutator is above ``strength_epsilon``
    (or at most ``strength_epsilon`` for ``weak=True``).

    The kept set is closed under alpha/beta exchange: a partner that passes
    the structural checks is added even if it misses the strength cut.
    """
    _closed_shell(system)
    seen: dict[tuple[int, int], Starter] = {}
    order: list[tuple[int, int]] = []

    def consider(p: PauliString, src, check_strength: bool) -> bool:
        p = p.phase_free()
        if p.key in seen or not _passes_structure(p, system, hf):
            return False
        strength = abs(hf_commutator(hamiltonian, p, hf))
        if check_strength:
            ok = strength <= strength_epsilon if weak else strength > strength_epsilon
            if not ok:
                return False
        seen[p.key] = Starter(p, strength, src)
        order.append(p.key)
        return True

    for item in paulis:
        p, src = (item, None) if isinstance(item, PauliString) else (item.pauli, item.source) if isinstance(item, Starter) else item
        consider(p, src, True)
    for key in list(order):
        st = seen[key]
        consider(spin_complement(st.pauli), st.source, False)

    out = [seen[k] for k in order]
    out.sort(key=lambda s: (-round(s.strength, 12), s.pauli.to_label()))
    return out


def one_per_excitation(starters: Sequence[Starter], allowed=None) -> list[Starter]:
    """Reduce to one string per excited determinant, keeping spin partners paired.

    ``allowed`` optionally restricts the choice (e.g. to FullSet members).
    Groups are visited in the input order; when the spin-flipped determinant
    already has a representative, its mirror image is preferred.
    """
    groups: dict[int, list[Starter]] = {}
    for s in starters:
        if allowed is not None and not allowed(s.pauli):
            continue
        groups.setdefault(s.pauli.x_bits, []).append(s)
    chosen: dict[int, Starter] = {}
    for x, members in groups.items():
        mirror = spin_complement(members[0].pauli).x_bits
        pick = members[0]
        if mirror in chosen:
            want = spin_complement(chosen[mirror].pauli).key
            pick = next((m for m in members if m.pauli.key == want), pick)
        chosen[x] = pick
    return list(chosen.values())


def format_starters(starters: Iterable[Starter]) -> str:
    return "".join(f"{s}\n" for s in starters)


def parse_starters(text: str) -> list[Starter]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        strength = float(parts[1]) if len(parts) > 1 else 0.0
        try:
            out.append(Starter(PauliString.from_label(parts[0]), strength))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out
