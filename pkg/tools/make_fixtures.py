"""Regenerate the bundled STO-3G FCIDUMP fixtures.

Requires pyscf, which is *not* a runtime dependency of niducc. Each fixture is
written as ``<tag>.fcidump`` with a ``<tag>.json`` sidecar holding the
geometry, the RHF energy and FCI energies used as test references.

    python tools/make_fixtures.py [outdir]
"""
import json
import sys
from pathlib import Path

import numpy as np
import pyscf
from pyscf import ao2mo, fci, gto, scf
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "src" / "niducc" / "data" / "fixtures"


def chain(n_atoms, r):
    return [("H", (0.0, 0.0, i * r)) for i in range(n_atoms)]


def molecule(name, r):
    if name == "H2":
        return chain(2, r), "D2h"
    if name == "H4":
        return chain(4, r), "D2h"
    if name == "H6":
        return chain(6, r), "D2h"
    if name == "LiH":
        return [("Li", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, r))], "C2v"
    if name == "BH":
        return [("B", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, r))], "C2v"
    if name == "BeH2":
        return [("H", (0.0, 0.0, -r)), ("Be", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, r))], "D2h"
    raise KeyError(name)


FIXTURES = {
    "H2": [0.735],
    "H4": [0.75, 1.0, 1.5],
    "H6": [1.0, 1.5, 2.0, 3.0, 3.5],
    "LiH": [1.0, 1.546, 2.0, 2.5, 3.0, 3.5],
    "BeH2": [1.316, 2.0, 3.5],
    "BH": [2.0],
}


def build(name, r, outdir):
    atoms, group = molecule(name, r)
    mol = gto.M(atom=atoms, basis="sto-3g", unit="Angstrom", symmetry=group, verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.max_cycle = 500
    e_scf = mf.kernel()
    if not mf.converged:
        mf = scf.newton(mf)
        e_scf = mf.kernel()
    assert mf.converged, (name, r)
    tag = f"{name}_r{r:.3f}"
    path = outdir / f"{tag}.fcidump"
    fcidump.from_scf(mf, str(path), tol=1e-15, molpro_orbsym=True)

    norb = mf.mo_coeff.shape[1]
    h1 = mf.mo_coeff.T @ mf.get_hcore() @ mf.mo_coeff
    eri = ao2mo.restore(1, ao2mo.full(mol, mf.mo_coeff), norb)
    solver = fci.direct_spin1.FCI()
    solver.conv_tol = 1e-13
    solver.max_cycle = 1000
    e_fci, _ = solver.kernel(h1, eri, norb, mol.nelec, ecore=mol.energy_nuc(), nroots=1)

    sidecar = {
        "molecule": name,
        "basis": "sto-3g",
        "bond_length_angstrom": r,
        "geometry_angstrom": [[a, list(map(float, xyz))] for a, xyz in atoms],
        "point_group": group,
        "n_spatial": int(norb),
        "n_electrons": int(mol.nelectron),
        "nuclear_repulsion": float(mol.energy_nuc()),
        "scf_energy": float(e_scf),
        "fci_energy": float(e_fci),
        "generator": f"pyscf {pyscf.__version__}",
    }
    (outdir / f"{tag}.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"{tag:16s} norb={norb:2d} nelec={mol.nelectron:2d} E_scf={e_scf:.10f} E_fci={e_fci:.10f}")


if __name__ == "__main__":
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else OUT
    outdir.mkdir(parents=True, exist_ok=True)
    for name, rs in FIXTURES.items():
        for r in rs:
            build(name, r, outdir)
