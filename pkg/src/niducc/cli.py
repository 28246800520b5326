"""Command-line interface: ``niducc {mcp,vqe,scan}``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 resource limit,
5 requested accuracy not reached, 6 other pipeline failure.
"""
from __future__ import annotations

import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
import logging
import os
from pathlib import Path
import re
import resource
import sys
import time

from .chem import ConfigurationError, FcidumpError, fixture_path, load_fcidump
from .mcp import (
    MCPConstructionError,
    PackedPauliSet,
    ResourceError,
    Sector,
    build_mcp,
    sector_full_group,
    symmetric_double_count,
    write_cache,
    write_pool,
)
from .vqe import CHEMICAL_ACCURACY, PROTOCOLS, run_niducc, prepare_pool

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_RESOURCE, EXIT_ACCURACY, EXIT_PIPELINE = 0, 2, 3, 4, 5, 6
OUT_ENV = "NIDUCC_OUT"

log = logging.getLogger("niducc")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def parse_bytes(text: str) -> int:
    """``"256M"``, ``"1MiB"``, ``"2g"`` or a plain byte count."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([kmgt]?)(i?b)?\s*", str(text), re.IGNORECASE)
    if m is None:
        raise argparse.ArgumentTypeError(f"cannot parse memory size {text!r}")
    scale = {"": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30, "t": 1 << 40}[m.group(2).lower()]
    return int(float(m.group(1)) * scale)


def positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value", EXIT_CONFIG)
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; command-line flags take precedence")
    p.add_argument("--fcidump", help="FCIDUMP file (a .json sidecar next to it is picked up)")
    p.add_argument("--molecule", help="bundled fixture name, e.g. H6, LiH, BeH2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mem-budget", type=parse_bytes, default=parse_bytes("1G"))
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("-v", "--verbose", action="store_true")


def _vqe_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=positive_int, default=8)
    p.add_argument("--protocol", default="strong-lie", choices=list(PROTOCOLS) + ["weak+lie", "strong+lie"])
    p.add_argument("--eps-prescreen", type=positive_float, default=1e-2)
    p.add_argument("--eps-dominant", type=positive_float, default=1e-3)
    p.add_argument("--grad-tol", type=positive_float, default=1e-10)
    p.add_argument("--eval-cap", type=positive_int, default=50_000)
    p.add_argument("--fidelity", action="store_true", help="record fidelity with the exact ground state per evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="niducc", description="NI-DUCC ansatz construction and VQE runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mcp", help="build FullGroup/FullSet and a minimal complete pool")
    _common(p)
    p.add_argument("--qubits", type=int)
    p.add_argument("--electrons", type=int)
    p.add_argument("--bond-length", type=float)
    p.add_argument("--eps-prescreen", type=positive_float, default=1e-2)
    p.add_argument("--eps-dominant", type=positive_float, default=1e-3)
    p.add_argument("--cache-group", action="store_true", help="also write the FullGroup binary cache")

    p = sub.add_parser("vqe", help="run the NI-DUCC-VQE pipeline on one geometry")
    _common(p)
    _vqe_flags(p)
    p.add_argument("--bond-length", type=float)
    p.add_argument("--accuracy", type=positive_float, default=CHEMICAL_ACCURACY, help="error (Hartree) required for exit code 0")

    p = sub.add_parser("scan", help="run one geometry per bond length and tabulate errors")
    _common(p)
    _vqe_flags(p)
    p.add_argument("--bond-lengths", default="", help="comma-separated list in Angstrom")
    p.add_argument("--jobs", type=positive_int, default=1)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}", EXIT_CONFIG)
        defaults = {}
        for key, value in cfg.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = action.type(value) if action.type else value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_system(args, bond_length=None):
    if args.fcidump:
        path = Path(args.fcidump)
    elif args.molecule:
        r = bond_length if bond_length is not None else args.bond_length
        if r is None:
            raise CliError("--molecule needs --bond-length", EXIT_CONFIG)
        path = fixture_path(args.molecule, r)
    else:
        raise CliError("give --fcidump or --molecule", EXIT_CONFIG)
    if not path.exists():
        raise CliError(f"no such file: {path}", EXIT_IO)
    try:
        return load_fcidump(path)
    except FcidumpError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None


def _peak_rss_bytes() -> int:
    # ru_maxrss survives exec on Linux and would include a large parent's
    # footprint; VmHWM belongs to this address space only
    try:
        for line in Path("/proc/self/status").read_text().splitlines():
            if line.startswith("VmHWM:"):
                return int(line.split()[1]) * 1024
    except OSError:
        pass
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _fmt(v) -> str:
    return f"{v:.15g}" if isinstance(v, float) else str(v)


# -- commands -------------------------------------------------------------------
def cmd_mcp(args) -> int:
    start = time.perf_counter()
    out = _out_dir(args)
    if args.fcidump or args.molecule:
        system = _load_system(args)
        plan = prepare_pool(system, "strong-lie", args.seed, args.eps_prescreen, args.eps_dominant, memory_budget=args.mem_budget)
        sector = Sector.from_system(system)
        pool, n_starters = plan.pool, len(plan.starters)
        full_set_count, full_group_count = plan.full_set_count, plan.full_group_count
        tag = system.name
        group = None
        if args.cache_group:
            _, group = sector_full_group(sector, args.mem_budget)
    else:
        if args.qubits is None or args.electrons is None:
            raise CliError("give --qubits and --electrons, or a molecule", EXIT_CONFIG)
        sector = Sector.generic(args.qubits, args.electrons)
        full_set, group = sector_full_group(sector, args.mem_budget)
        na, nb = (args.electrons + 1) // 2, args.electrons // 2
        hf = sum(1 << (2 * i) for i in range(na)) | sum(1 << (2 * i + 1) for i in range(nb))
        n_starters = symmetric_double_count(full_set, hf)
        pool = build_mcp([], full_set, group, args.seed)
        full_set_count, full_group_count = full_set.count, group.count
        tag = f"q{args.qubits}_e{args.electrons}"
        del full_set
    write_pool(out / f"{tag}_pool.txt", pool)
    write_cache(out / f"{tag}_pool.bin", PackedPauliSet.from_strings(pool.members), sector)
    if args.cache_group and group is not None:
        write_cache(out / f"{tag}_fullgroup.bin", group, sector)
    print(f"MCP={len(pool)}")
    print(f"Starters={n_starters}")
    print(f"FullSet={full_set_count}")
    print(f"FullGroup={full_group_count}")
    print(f"PeakMemoryMiB={_peak_rss_bytes() / 2**20:.6f}")
    print(f"WallTimeSeconds={time.perf_counter() - start:.6f}")
    return EXIT_OK


def _run_one(args, bond_length=None):
    system = _load_system(args, bond_length)
    return run_niducc(
        system,
        k=args.k,
        protocol=args.protocol,
        rng_seed=args.seed,
        eval_cap=args.eval_cap,
        grad_tol=args.grad_tol,
        eps_prescreen=args.eps_prescreen,
        eps_dominant=args.eps_dominant,
        track_fidelity=args.fidelity,
        memory_budget=args.mem_budget,
    )


def cmd_vqe(args) -> int:
    out = _out_dir(args)
    res = _run_one(args)
    rep = res.report
    stem = f"{rep['system']}_r{rep['geometry']}_k{args.k}_{rep['protocol']}" if rep["geometry"] is not None else f"{rep['system']}_k{args.k}_{rep['protocol']}"
    # timing stays out of the file so equal seeds give byte-identical reports
    (out / f"{stem}.json").write_text(res.report_json(timing=False))
    (out / f"{stem}.csv").write_text(res.trace.to_csv())
    for key in ("system", "geometry", "k", "protocol", "pool_size", "parameters", "cnots", "energy", "fci_energy", "error", "evaluations"):
        print(f"{key}={_fmt(rep[key])}")
    print(f"WallTimeSeconds={rep['wall_time']:.6f}")
    return EXIT_OK if abs(rep["error"]) <= args.accuracy else EXIT_ACCURACY


def _scan_worker(payload):
    args, r = payload
    try:
        rep = _run_one(args, r).report
        return r, rep["energy"], rep["fci_energy"], rep["error"], "ok"
    except Exception as exc:  # recorded per geometry, the scan goes on
        return r, float("nan"), float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"


def cmd_scan(args) -> int:
    out = _out_dir(args)
    try:
        lengths = [float(x) for x in args.bond_lengths.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"bad bond-length list {args.bond_lengths!r}", EXIT_CONFIG) from None
    payloads = [(args, r) for r in lengths]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_scan_worker, payloads))
    else:
        rows = [_scan_worker(p) for p in payloads]
    name = args.molecule or (Path(args.fcidump).stem if args.fcidump else "scan")
    path = out / f"{name}_k{args.k}_scan.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "E_NIDUCC", "E_FCI", "error", "status"])
        for r, e, f, err, status in rows:
            w.writerow([_fmt(r), _fmt(e), _fmt(f), _fmt(err), status])
    print(path.read_text(), end="")
    return EXIT_OK if all(row[4] == "ok" for row in rows) else EXIT_PIPELINE


COMMANDS = {"mcp": cmd_mcp, "vqe": cmd_vqe, "scan": cmd_scan}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    stage = args.command
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ResourceError as exc:
        print(f"error [{stage}]: memory budget exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigurationError, ValueError) as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MCPConstructionError, ArithmeticError, RuntimeError) as exc:
        print(f"error [{stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
