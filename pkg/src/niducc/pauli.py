"""Pauli strings in the symplectic (x, z) representation.

Qubit ``q`` lives in bit ``q`` of both masks. A string stands for the operator
``i**phase_exp * P_0 (x) P_1 (x) ... (x) P_{n-1}`` where each factor is read off
the bit pair ``(x_q, z_q)``: ``(0,0)=I, (1,0)=X, (0,1)=Z, (1,1)=Y``. Note that
``(1,1)`` means ``Y`` itself, not ``XZ``.

Python integers are arbitrary precision, so masks wider than a machine word
need no special handling.
"""
from __future__ import annotations

from dataclasses import dataclass
import re

__all__ = [
    "PauliString",
    "multiply",
    "commutes",
    "commutator",
    "apply_to_basis",
    "popcount",
]

_LABELS = "IXZY"
_PREFIX_TO_PHASE = {"": 0, "+": 0, "+1": 0, "i": 1, "+i": 1, "-": 2, "-1": 2, "-i": 3}
_PHASE_TO_PREFIX = {0: "", 1: "+i", 2: "-1", 3: "-i"}
_LABEL_RE = re.compile(r"^([+-]?[1i]?)([IXYZ]+)$")
_UNIT = (1, 1j, -1, -1j)


def popcount(v: int) -> int:
    return v.bit_count()


class DimensionError(ValueError):
    """Raised when two Pauli objects act on different numbers of qubits."""


@dataclass(frozen=True, slots=True)
class PauliString:
    n: int
    x_bits: int
    z_bits: int
    phase_exp: int = 0

    def __post_init__(self):
        full = (1 << self.n) - 1
        if self.n < 1 or self.x_bits & ~full or self.z_bits & ~full:
            raise ValueError(f"masks do not fit in {self.n} qubits")
        if not 0 <= self.phase_exp < 4:
            object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    # -- construction --------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def single(cls, n: int, qubit: int, label: str) -> "PauliString":
        k = _LABELS.index(label)
        return cls(n, (k & 1) << qubit, (k >> 1) << qubit)

    @classmethod
    def from_ops(cls, n: int, ops: dict[int, str]) -> "PauliString":
        """Build from a sparse ``{qubit: 'X'|'Y'|'Z'}`` mapping."""
        x = z = 0
        for q, label in ops.items():
            k = _LABELS.index(label)
            x |= (k & 1) << q
            z |= (k >> 1) << q
        return cls(n, x, z)

    @classmethod
    def from_label(cls, text: str) -> "PauliString":
        """Parse ``"XIZY"`` (qubit 0 leftmost) with an optional phase prefix."""
        m = _LABEL_RE.match(text.strip())
        if m is None or m.group(1) not in _PREFIX_TO_PHASE:
            raise ValueError(f"cannot parse Pauli label {text!r}")
        x = z = 0
        for q, ch in enumerate(m.group(2)):
            k = _LABELS.index(ch)
            x |= (k & 1) << q
            z |= (k >> 1) << q
        return cls(len(m.group(2)), x, z, _PREFIX_TO_PHASE[m.group(1)])

    # -- properties ----------------------------------------------------
    @property
    def weight(self) -> int:
        return popcount(self.x_bits | self.z_bits)

    @property
    def y_count(self) -> int:
        return popcount(self.x_bits & self.z_bits)

    @property
    def key(self) -> tuple[int, int]:
        """Phase-free identity of the string."""
        return (self.x_bits, self.z_bits)

    @property
    def coefficient(self) -> complex:
        return _UNIT[self.phase_exp]

    def is_identity(self) -> bool:
        return not (self.x_bits | self.z_bits)

    def phase_free(self) -> "PauliString":
        if self.phase_exp == 0:
            return self
        return PauliString(self.n, self.x_bits, self.z_bits)

    def with_phase(self, phase_exp: int) -> "PauliString":
        return PauliString(self.n, self.x_bits, self.z_bits, phase_exp % 4)

    def label(self, q: int) -> str:
        return _LABELS[((self.x_bits >> q) & 1) | (((self.z_bits >> q) & 1) << 1)]

    def to_label(self) -> str:
        body = "".join(self.label(q) for q in range(self.n))
        return _PHASE_TO_PREFIX[self.phase_exp] + body

    def __str__(self) -> str:
        return self.to_label()

    def __repr__(self) -> str:
        return f"PauliString({self.to_label()!r})"

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)


def _check(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} != {b.n}")


def product_phase(x1: int, z1: int, x2: int, z2: int) -> int:
    """Exponent of ``i`` picked up by ``P(x1,z1) P(x2,z2)`` (phase-free inputs).

    Writing ``P(x,z) = i**(x.z) X**x Z**z`` and commuting ``Z**z1`` past
    ``X**x2`` gives ``i**(|x1 z1| + |x2 z2| + 2|z1 x2| - |x3 z3|)``.
    """
    x3 = x1 ^ x2
    z3 = z1 ^ z2
    return (popcount(x1 & z1) + popcount(x2 & z2) + 2 * popcount(z1 & x2) - popcount(x3 & z3)) & 3


def multiply(a: PauliString, b: PauliString) -> PauliString:
    _check(a, b)
    phase = a.phase_exp + b.phase_exp + product_phase(a.x_bits, a.z_bits, b.x_bits, b.z_bits)
    return PauliString(a.n, a.x_bits ^ b.x_bits, a.z_bits ^ b.z_bits, phase & 3)


def symplectic(x1: int, z1: int, x2: int, z2: int) -> int:
    return (popcount(x1 & z2) + popcount(z1 & x2)) & 1


def commutes(a: PauliString, b: PauliString) -> bool:
    _check(a, b)
    return not symplectic(a.x_bits, a.z_bits, b.x_bits, b.z_bits)


def commutator(a: PauliString, b: PauliString) -> PauliString | None:
    """Return ``c`` with ``[a, b] = 2 c``, or ``None`` when ``a`` and ``b`` commute."""
    if commutes(a, b):
        return None
    return multiply(a, b)


def apply_to_basis(a: PauliString, bits: int) -> tuple[int, complex]:
    """Act with ``a`` on the computational basis state ``|bits>``.

    Returns ``(bits', phase)`` with ``a|bits> = phase |bits'>``.
    """
    if bits >> a.n:
        raise DimensionError(f"basis state {bits:#b} does not fit in {a.n} qubits")
    # Y|b> = i(-1)^b |~b>, Z|b> = (-1)^b |b>
    k = a.phase_exp + a.y_count + 2 * popcount(bits & a.z_bits)
    return bits ^ a.x_bits, _UNIT[k & 3]
