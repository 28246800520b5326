"""Complete pools, symmetry-restricted groups and minimal complete pools.

Modulo phase, Pauli strings on ``n`` qubits form the vector space
``GF(2)^(2n)`` under multiplication, so every product group is the span of
its generators and has order ``2**rank``. Elements are packed into one
``uint64`` word ``x << n | z`` and sets are kept as sorted ``uint64`` arrays:
8 bytes per element, binary-search membership.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import io
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .chem import MolecularSystem, spin_masks
from .pauli import PauliString

__all__ = [
    "DomainError",
    "ResourceError",
    "MCPConstructionError",
    "Sector",
    "PackedPauliSet",
    "PoolCandidate",
    "gf2_rank",
    "base_generating_set",
    "product_group",
    "restrict_by_symmetry",
    "symmetric_subgroup_basis",
    "sector_full_group",
    "lie_closure",
    "symmetric_double_count",
    "is_inseparable",
    "is_complete",
    "build_mcp",
    "write_pool",
    "read_pool",
    "write_cache",
    "read_cache",
]

MAX_PACKED_QUBITS = 31
DEFAULT_BUDGET = 1 << 30
_CHUNK = 1 << 20


class DomainError(ValueError):
    pass


class ResourceError(MemoryError):
    """Projected memory use exceeds the configured budget."""

    def __init__(self, what: str, cardinality: int, budget: int):
        self.cardinality = cardinality
        self.budget = budget
        super().__init__(
            f"{what}: {cardinality} elements need {cardinality * 8} bytes, budget is {budget} bytes"
        )


class MCPConstructionError(RuntimeError):
    def __init__(self, message: str, candidate: "PoolCandidate"):
        super().__init__(message)
        self.candidate = candidate


# -- packing ------------------------------------------------------------------
def _pack(p: PauliString) -> int:
    return p.x_bits << p.n | p.z_bits


def _unpack(n: int, key: int) -> PauliString:
    return PauliString(n, key >> n, key & ((1 << n) - 1))


def _split(n: int, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = np.uint64((1 << n) - 1)
    return keys >> np.uint64(n), keys & mask


def _odd_y(n: int, keys: np.ndarray) -> np.ndarray:
    out = np.empty(len(keys), dtype=bool)
    for s in range(0, len(keys), _CHUNK):
        x, z = _split(n, keys[s : s + _CHUNK])
        out[s : s + _CHUNK] = np.bitwise_count(x & z) & 1
    return out


def _anticommutes(n: int, keys: np.ndarray, other: int) -> np.ndarray:
    """Symplectic product of each packed key with one packed string."""
    ox, oz = np.uint64(other >> n), np.uint64(other & ((1 << n) - 1))
    out = np.empty(len(keys), dtype=bool)
    for s in range(0, len(keys), _CHUNK):
        x, z = _split(n, keys[s : s + _CHUNK])
        out[s : s + _CHUNK] = (np.bitwise_count(x & oz) + np.bitwise_count(z & ox)) & 1
    return out


def gf2_rank(keys: Iterable[int]) -> int:
    """Rank of packed strings over GF(2), i.e. log2 of their product-group order."""
    pivots: dict[int, int] = {}
    for v in keys:
        v = int(v)
        while v:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = v
                break
            v ^= pivots[top]
    return len(pivots)


def _reduce(pivots: dict[int, int], v: int) -> int:
    while v:
        top = v.bit_length() - 1
        if top not in pivots:
            return v
        v ^= pivots[top]
    return 0


# -- sector -------------------------------------------------------------------
@dataclass(frozen=True)
class Sector:
    """A symmetry sector: qubit count, electron count and the Z-type symmetry
    strings (as z masks) that FullGroup elements must commute with."""

    n: int
    n_elec: int
    symmetries: tuple[int, ...]
    label: str = ""

    @classmethod
    def from_orbsym(cls, n: int, n_elec: int, orbsym: Sequence[int], label: str = "") -> "Sector":
        if n % 2:
            raise DomainError(f"spin-orbital count must be even, got {n}")
        if len(orbsym) != n // 2:
            raise DomainError(f"{len(orbsym)} orbital symmetries for {n // 2} orbitals")
        alpha, beta = spin_masks(n)
        syms = [alpha, beta]
        irreps = [s - 1 for s in orbsym]
        for bit in range(3):
            m = 0
            for i, g in enumerate(irreps):
                if g >> bit & 1:
                    m |= 0b11 << (2 * i)
            syms.append(m)
        # keep an independent, non-trivial subset in a canonical order
        kept, pivots = [], {}
        for m in syms:
            if m and _reduce(pivots, m):
                r = _reduce(pivots, m)
                pivots[r.bit_length() - 1] = r
                kept.append(m)
        return cls(n, n_elec, tuple(kept), label)

    @classmethod
    def from_system(cls, system: MolecularSystem) -> "Sector":
        return cls.from_orbsym(system.n_so, system.n_elec, system.orbsym, system.name)

    @classmethod
    def generic(cls, n: int, n_elec: int) -> "Sector":
        """Linear-chain sector: orbitals alternate between gerade and ungerade."""
        if n % 2:
            raise DomainError(f"spin-orbital count must be even, got {n}")
        if not 0 <= n_elec <= n:
            raise DomainError(f"{n_elec} electrons do not fit in {n} spin orbitals")
        orbsym = [1 if i % 2 == 0 else 5 for i in range(n // 2)]
        return cls.from_orbsym(n, n_elec, orbsym, f"chain({n},{n_elec})")

    def commutes(self, p: PauliString) -> bool:
        return all(not (p.x_bits & m).bit_count() & 1 for m in self.symmetries)


# -- sets ---------------------------------------------------------------------
@dataclass
class PackedPauliSet:
    """Deduplicated phase-free strings as a sorted array of packed words."""

    n: int
    keys: np.ndarray
    rank: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_PACKED_QUBITS:
            raise DomainError(f"packed sets support 1..{MAX_PACKED_QUBITS} qubits, got {self.n}")
        self.keys = np.asarray(self.keys, dtype=np.uint64)

    @classmethod
    def from_strings(cls, strings: Iterable[PauliString], n: int | None = None) -> "PackedPauliSet":
        strings = list(strings)
        if n is None:
            if not strings:
                raise DomainError("cannot infer qubit count of an empty set")
            n = strings[0].n
        keys = np.unique(np.array([_pack(p) for p in strings], dtype=np.uint64))
        return cls(n, keys)

    @property
    def count(self) -> int:
        return int(len(self.keys))

    def __len__(self) -> int:
        return self.count

    def __contains__(self, p: PauliString) -> bool:
        return self.contains_key(_pack(p))

    def contains_key(self, key: int) -> bool:
        i = int(np.searchsorted(self.keys, np.uint64(key)))
        return i < len(self.keys) and int(self.keys[i]) == key

    def contains_keys(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.uint64)
        i = np.searchsorted(self.keys, keys)
        i = np.minimum(i, max(len(self.keys) - 1, 0))
        return self.keys[i] == keys if len(self.keys) else np.zeros(len(keys), dtype=bool)

    def __iter__(self):
        for k in self.keys:
            yield _unpack(self.n, int(k))

    def strings(self) -> list[PauliString]:
        return list(self)

    def without_identity(self) -> "PackedPauliSet":
        return PackedPauliSet(self.n, self.keys[self.keys != 0])

    @property
    def nbytes(self) -> int:
        return int(self.keys.nbytes)


@dataclass
class PoolCandidate:
    members: list[PauliString]
    provenance: list[str]
    seed: int | None = None
    rounds: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = [p.key for p in self.members]
        if len(set(keys)) != len(keys):
            raise ValueError("pool members must be distinct modulo phase")
        if len(self.provenance) != len(self.members):
            raise ValueError("one provenance tag per member required")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def n(self) -> int:
        return self.members[0].n

    @property
    def starters(self) -> list[PauliString]:
        return [p for p, tag in zip(self.members, self.provenance) if tag == "starter"]


# -- groups -------------------------------------------------------------------
def base_generating_set(n: int) -> list[PauliString]:
    """``Z_1..Z_{n-2}, Y_1..Y_{n-1}, Z_{n-1} Y_n`` (1-based qubits), ``2n-2`` strings."""
    if n < 3:
        raise DomainError(f"complete pool needs at least 3 qubits, got {n}")
    out = [PauliString.single(n, q, "Z") for q in range(n - 2)]
    out += [PauliString.single(n, q, "Y") for q in range(n - 1)]
    out.append(PauliString.from_ops(n, {n - 2: "Z", n - 1: "Y"}))
    return out


def _independent(n: int, keys: Iterable[int]) -> list[int]:
    pivots: dict[int, int] = {}
    basis = []
    for k in keys:
        r = _reduce(pivots, int(k))
        if r:
            pivots[r.bit_length() - 1] = r
            basis.append(int(k))
    return basis


def _span(n: int, basis: Sequence[int], budget: int, what: str) -> PackedPauliSet:
    size = 1 << len(basis)
    if size * 8 > budget:
        raise ResourceError(what, size, budget)
    out = np.zeros(size, dtype=np.uint64)
    m = 1
    # doubling: each independent generator adds one coset of the current group
    for g in basis:
        np.bitwise_xor(out[:m], np.uint64(g), out=out[m : 2 * m])
        m *= 2
    out.sort()
    return PackedPauliSet(n, out, rank=len(basis))


def product_group(generators: Sequence[PauliString], memory_budget: int = DEFAULT_BUDGET) -> PackedPauliSet:
    """All products of ``generators`` modulo phase, identity included."""
    if not generators:
        raise DomainError("empty generator list")
    n = generators[0].n
    if any(p.n != n for p in generators):
        raise DomainError("generators act on different qubit counts")
    basis = _independent(n, (_pack(p) for p in generators))
    return _span(n, basis, memory_budget, "product group")


def group_order(generators: Sequence[PauliString]) -> int:
    return 1 << gf2_rank(_pack(p) for p in generators)


def _symplectic_int(n: int, a: int, b: int) -> int:
    full = (1 << n) - 1
    return ((a >> n & b & full).bit_count() + (a & full & b >> n).bit_count()) & 1


def symmetric_subgroup_basis(sector: Sector) -> list[int]:
    """GF(2) basis of the complete-pool subgroup commuting with ``sector``.

    The commutation constraints are linear, so the kernel of the constraint
    map restricted to the complete-pool basis is computed by elimination.
    """
    n = sector.n
    basis = [_pack(p) for p in base_generating_set(n)]
    syms = sector.symmetries  # z masks, packed as plain z

    def signature(v: int) -> int:
        return sum(_symplectic_int(n, v, s) << i for i, s in enumerate(syms))

    rows = [(signature(v), v) for v in basis]
    kernel = []
    pivots: dict[int, tuple[int, int]] = {}
    for sig, v in rows:
        while sig:
            top = sig.bit_length() - 1
            if top not in pivots:
                pivots[top] = (sig, v)
                break
            psig, pv = pivots[top]
            sig ^= psig
            v ^= pv
        else:
            kernel.append(v)
    return kernel


def restrict_by_symmetry(group: PackedPauliSet, sector: Sector) -> tuple[PackedPauliSet, PackedPauliSet]:
    """``(full_set, full_group)``: members commuting with every sector
    symmetry, and the odd-Y part of those."""
    if group.n != sector.n:
        raise DomainError(f"group on {group.n} qubits, sector on {sector.n}")
    keep = np.ones(group.count, dtype=bool)
    for s in sector.symmetries:
        keep &= ~_anticommutes(group.n, group.keys, s)
    full_group = PackedPauliSet(group.n, group.keys[keep])
    full_set = PackedPauliSet(group.n, full_group.keys[_odd_y(group.n, full_group.keys)])
    return full_set, full_group


def sector_full_group(sector: Sector, memory_budget: int = DEFAULT_BUDGET) -> tuple[PackedPauliSet, PackedPauliSet]:
    """``(full_set, full_group)`` without materializing the complete pool."""
    basis = symmetric_subgroup_basis(sector)
    group = _span(sector.n, basis, memory_budget, "FullGroup")
    if (1 << len(basis)) * 8 * 3 // 2 > memory_budget:
        raise ResourceError("FullSet", 1 << len(basis), memory_budget)
    full_set = PackedPauliSet(sector.n, group.keys[_odd_y(sector.n, group.keys)])
    return full_set, group


def symmetric_double_count(full_set: PackedPauliSet, hf: int) -> int:
    """FullSet strings that flip ``|hf>`` on exactly four qubits while keeping
    the alpha and beta occupations: the symmetric double-excitation candidates."""
    n = full_set.n
    alpha, _ = spin_masks(n)
    occ_a, occ_b = np.uint64(hf & alpha), np.uint64(hf & (alpha << 1))
    vir_a, vir_b = np.uint64(~hf & alpha), np.uint64(~hf & (alpha << 1) & ((1 << n) - 1))
    total = 0
    for s in range(0, full_set.count, _CHUNK):
        x, _z = _split(n, full_set.keys[s : s + _CHUNK])
        ok = np.bitwise_count(x) == 4
        ok &= np.bitwise_count(x & occ_a) == np.bitwise_count(x & vir_a)
        ok &= np.bitwise_count(x & occ_b) == np.bitwise_count(x & vir_b)
        total += int(ok.sum())
    return total


# -- closure and checks ---------------------------------------------------------
def lie_closure(seed: Iterable[PauliString] | PackedPauliSet, memory_budget: int = DEFAULT_BUDGET) -> PackedPauliSet:
    """Smallest superset closed under taking the Pauli part of commutators."""
    if isinstance(seed, PackedPauliSet):
        n, keys = seed.n, seed.keys.copy()
    else:
        seed = list(seed)
        if not seed:
            raise DomainError("empty seed set")
        n = seed[0].n
        keys = np.unique(np.array([_pack(p) for p in seed], dtype=np.uint64))
    allk = np.sort(keys)
    frontier = allk
    while len(frontier):
        found = []
        x_all, z_all = _split(n, allk)
        for s in range(0, len(frontier), 256):
            fx, fz = _split(n, frontier[s : s + 256])
            anti = (np.bitwise_count(fx[:, None] & z_all[None, :]) + np.bitwise_count(fz[:, None] & x_all[None, :])) & 1
            i, j = np.nonzero(anti)
            found.append(frontier[s : s + 256][i] ^ allk[j])
        new = np.unique(np.concatenate(found)) if found else np.empty(0, np.uint64)
        pos = np.minimum(np.searchsorted(allk, new), len(allk) - 1)
        new = new[allk[pos] != new]
        if (len(allk) + len(new)) * 8 > memory_budget:
            raise ResourceError("Lie closure", len(allk) + len(new), memory_budget)
        allk = np.sort(np.concatenate([allk, new]))
        frontier = new
    return PackedPauliSet(n, allk)


def is_inseparable(strings: Sequence[PauliString]) -> bool:
    """True iff the anticommutation graph of ``strings`` is connected."""
    strings = list(strings)
    if not strings:
        raise DomainError("empty set")
    n = strings[0].n
    keys = np.array([_pack(p) for p in strings], dtype=np.uint64)
    seen = np.zeros(len(keys), dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        i = stack.pop()
        hit = _anticommutes(n, keys, int(keys[i])) & ~seen
        idx = np.nonzero(hit)[0]
        seen[idx] = True
        stack.extend(int(j) for j in idx)
    return bool(seen.all())


def is_complete(candidate: PoolCandidate | Sequence[PauliString], full_group: PackedPauliSet) -> bool:
    """Product group of the candidate equals ``full_group`` and it is inseparable.

    Subgroup membership plus equal order (``2**rank``) is equivalent to
    equality of the two groups, so nothing has to be enumerated.
    """
    members = candidate.members if isinstance(candidate, PoolCandidate) else list(candidate)
    if not members:
        return False
    keys = np.array([_pack(p) for p in members], dtype=np.uint64)
    if not full_group.contains_keys(keys).all():
        return False
    if (1 << gf2_rank(keys.tolist())) != full_group.count:
        return False
    return is_inseparable(members)


def build_mcp(
    starters: Sequence[PauliString],
    full_set: PackedPauliSet,
    full_group: PackedPauliSet,
    rng_seed: int = 0,
    max_attempts: int = 1000,
    target_size: int | None = None,
) -> PoolCandidate:
    """Complete ``starters`` with random FullSet strings.

    Strings are drawn uniformly without replacement from ``full_set`` minus
    the current members, one per failed verification round, until the pool is
    complete. A complete pool shorter than ``target_size`` (default ``2n-2``)
    is then topped up with further draws, unless the starters alone were
    already complete.
    """
    n = full_set.n
    target = 2 * n - 2 if target_size is None else target_size
    members: list[PauliString] = []
    seen = set()
    for p in starters:
        p = p.phase_free()
        if p.key not in seen:
            seen.add(p.key)
            members.append(p)
    provenance = ["starter"] * len(members)
    if members and is_complete(members, full_group):
        return PoolCandidate(members, provenance, rng_seed, 0, {"m": 0})

    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(full_set.count)
    cursor = 0

    def draw() -> PauliString | None:
        nonlocal cursor
        while cursor < len(order):
            p = _unpack(n, int(full_set.keys[order[cursor]]))
            cursor += 1
            if p.key not in seen:
                seen.add(p.key)
                return p
        return None

    rounds = 0
    complete = exhausted = False
    while rounds < max_attempts:
        p = draw()
        if p is None:
            exhausted = True
            break
        members.append(p)
        provenance.append("random-fill")
        rounds += 1
        if is_complete(members, full_group):
            complete = True
            break
    diag = {
        "rank": gf2_rank(_pack(p) for p in members),
        "full_group_rank": full_group.count.bit_length() - 1,
        "inseparable": is_inseparable(members) if members else False,
        "m": provenance.count("random-fill"),
        "exhausted": exhausted,
    }
    if not complete:
        cand = PoolCandidate(members, provenance, rng_seed, rounds, diag)
        raise MCPConstructionError(f"pool incomplete after {rounds} rounds: {diag}", cand)
    while len(members) < target:
        p = draw()
        if p is None:
            break
        members.append(p)
        provenance.append("random-fill")
    diag["m"] = provenance.count("random-fill")
    diag["complete_after"] = len(members) - (diag["m"] - rounds)
    return PoolCandidate(members, provenance, rng_seed, rounds, diag)


# -- I/O ------------------------------------------------------------------------
def write_pool(path: str | Path, pool: PoolCandidate) -> None:
    lines = [f"# seed {pool.seed}\n"]
    lines += [f"{p.to_label()} {tag}\n" for p, tag in zip(pool.members, pool.provenance)]
    Path(path).write_text("".join(lines))


def read_pool(path: str | Path) -> PoolCandidate:
    members, prov, seed = [], [], None
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "#":
            if len(parts) >= 3 and parts[1] == "seed" and parts[2] != "None":
                seed = int(parts[2])
            continue
        members.append(PauliString.from_label(parts[0]))
        prov.append(parts[1] if len(parts) > 1 else "starter")
    return PoolCandidate(members, prov, seed)


_MAGIC = b"NIDUCCPS"
_VERSION = 1


def write_cache(path: str | Path, pset: PackedPauliSet, sector: Sector) -> None:
    """Binary set cache: magic, version, sector descriptor, count, then one
    little-endian ``uint64`` word ``x << n | z`` per element."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HHHH", _VERSION, sector.n, sector.n_elec, len(sector.symmetries)))
        for s in sector.symmetries:
            fh.write(struct.pack("<Q", s))
        fh.write(struct.pack("<Q", pset.count))
        fh.write(pset.keys.astype("<u8").tobytes())


def read_cache(path: str | Path) -> tuple[PackedPauliSet, Sector]:
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if buf.read(8) != _MAGIC:
        raise ValueError(f"{path}: not a pool cache")
    version, n, n_elec, nsym = struct.unpack("<HHHH", buf.read(8))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    syms = tuple(struct.unpack("<Q", buf.read(8))[0] for _ in range(nsym))
    (count,) = struct.unpack("<Q", buf.read(8))
    keys = np.frombuffer(buf.read(8 * count), dtype="<u8", count=count).astype(np.uint64)
    return PackedPauliSet(n, keys), Sector(n, n_elec, syms)
