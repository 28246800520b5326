import numpy as np
import pytest

from niducc.chem import ConfigurationError, build_qubit_hamiltonian, load_fixture, parse_fcidump
from niducc.pauli import PauliString
from niducc.screen import (
    DoubleExcitation,
    Starter,
    StateError,
    all_doubles,
    format_starters,
    hf_commutator,
    one_per_excitation,
    parse_starters,
    paulis_from_double,
    prescreen_doubles,
    select_dominant,
    spin_complement,
    symmetry_filter,
)
from niducc.sim import pauli_sum_to_sparse

from conftest import dense

H2_STRINGS = ["XXXY", "XXYX", "XYXX", "XYYY", "YXXX", "YXYY", "YYXY", "YYYX"]


def jw_candidates(system):
    return [(p, d) for d in all_doubles(system) for p in paulis_from_double(d, system.n_so)]


class TestPrescreen:
    def test_h2_single_double(self, h2):
        system, _, _ = h2
        (d,) = prescreen_doubles(system)
        assert d.indices == (0, 1, 2, 3)
        # <01||23> is the exchange integral (01|10)
        assert d.v == pytest.approx(system.v[0, 1, 1, 0])

    def test_h4_counts(self, h4):
        system, _, _ = h4
        assert len(all_doubles(system)) == 18
        assert len(prescreen_doubles(system)) == 10
        assert len(prescreen_doubles(system, 1e-12)) == 10

    def test_threshold_validation(self, h2):
        with pytest.raises(ValueError):
            prescreen_doubles(h2[0], 0.0)

    def test_dominant_requires_amplitudes(self):
        with pytest.raises(StateError):
            select_dominant([DoubleExcitation(0, 1, 2, 3, 0.2)])

    def test_dominant_cut(self):
        ds = [DoubleExcitation(0, 1, 2, 3, 0.2, 0.1), DoubleExcitation(0, 1, 4, 5, 0.01, 0.01)]
        assert [d.indices for d in select_dominant(ds, 1e-3)] == [(0, 1, 2, 3)]

    def test_open_shell_rejected(self):
        s = parse_fcidump("&FCI NORB=2,NELEC=1,MS2=1 &END\n")
        with pytest.raises(ConfigurationError):
            all_doubles(s)


class TestStarters:
    def test_h2_survivors(self, h2):
        system, h, hf = h2
        kept = symmetry_filter(jw_candidates(system), system, h, hf)
        assert sorted(s.pauli.to_label() for s in kept) == H2_STRINGS
        # every JW string carries |<HF|[H,P]|HF>| = 2 |<01||23>|
        for s in kept:
            assert s.strength == pytest.approx(2 * abs(system.v[0, 1, 1, 0]))

    def test_hf_commutator_dense(self, h4):
        system, h, hf = h4
        m = pauli_sum_to_sparse(h).toarray()
        for p, _ in jw_candidates(system)[:40]:
            d = dense(p)
            ref = (m @ d - d @ m)[hf, hf]
            assert hf_commutator(h, p, hf) == pytest.approx(ref, abs=1e-12)

    def test_h4_exhaustive_oracle(self, h4):
        """Kept set equals the dense-predicate survivors plus their spin partners."""
        system, h, hf = h4
        m = pauli_sum_to_sparse(h).toarray()
        alpha = 0b01010101
        passing = set()
        for p, _ in jw_candidates(system):
            new = hf ^ p.x_bits
            irrep = 0
            for q in range(8):
                if p.x_bits >> q & 1:
                    irrep ^= system.orbsym[q // 2] - 1
            d = dense(p)
            strength = abs((m @ d - d @ m)[hf, hf])
            if (
                p.y_count % 2
                and bin(new & alpha).count("1") == 2
                and bin(new & ~alpha & 0xFF).count("1") == 2
                and irrep == 0
                and strength > 1e-3
            ):
                passing.add(p.to_label())
        kept = {s.pauli.to_label() for s in symmetry_filter(jw_candidates(system), system, h, hf)}
        assert passing <= kept
        closure = passing | {spin_complement(PauliString.from_label(lab)).to_label() for lab in passing}
        assert kept == closure
        assert len(passing) == 80 and len(kept) == 128

    def test_idempotent(self, h4):
        system, h, hf = h4
        once = symmetry_filter(jw_candidates(system), system, h, hf)
        twice = symmetry_filter(once, system, h, hf)
        assert [s.pauli for s in once] == [s.pauli for s in twice]

    def test_spin_closed(self, h4):
        system, h, hf = h4
        kept = {s.pauli.key for s in symmetry_filter(jw_candidates(system), system, h, hf)}
        for key in kept:
            p = PauliString(8, *key)
            assert spin_complement(p).key in kept

    def test_ordering(self, h4):
        system, h, hf = h4
        kept = symmetry_filter(jw_candidates(system), system, h, hf)
        keys = [(-round(s.strength, 12), s.pauli.to_label()) for s in kept]
        assert keys == sorted(keys)

    def test_weak_complement(self, h4):
        system, h, hf = h4
        cands = jw_candidates(system)
        strong = {s.pauli.key for s in symmetry_filter(cands, system, h, hf, 0.15)}
        weak = symmetry_filter(cands, system, h, hf, 0.15, weak=True)
        assert weak
        assert all(s.strength <= 0.15 or spin_complement(s.pauli).key in {w.pauli.key for w in weak} for s in weak)
        assert not strong & {s.pauli.key for s in weak if s.strength <= 0.15}

    def test_one_per_excitation(self, h4):
        system, h, hf = h4
        reps = one_per_excitation(symmetry_filter(jw_candidates(system), system, h, hf))
        assert len(reps) == 10
        assert len({s.pauli.x_bits for s in reps}) == 10
        chosen = {s.pauli.key for s in reps}
        for s in reps:
            mirror = spin_complement(s.pauli)
            if mirror.x_bits != s.pauli.x_bits:
                assert mirror.key in chosen

    def test_spin_complement_involution(self):
        p = PauliString.from_label("XYZIZXYI")
        assert spin_complement(spin_complement(p)) == p
        assert spin_complement(PauliString.from_label("IX")).to_label() == "XI"

    def test_round_trip_text(self):
        starters = [Starter(PauliString.from_label("XXXY"), 0.25), Starter(PauliString.from_label("YYXY"), 0.125)]
        back = parse_starters("# header\n" + format_starters(starters))
        assert [(s.pauli, s.strength) for s in back] == [(s.pauli, s.strength) for s in starters]

    def test_parse_error_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_starters("XXXY 1.0\nXQ 2.0\n")
