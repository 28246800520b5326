"""Ansatz construction, optimization and the end-to-end NI-DUCC-VQE pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field
import csv
import io
import json
import math
import time
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chem import MolecularSystem, PauliSum, build_qubit_hamiltonian, hartree_fock_state, jw_excitation
from .mcp import DEFAULT_BUDGET, MCPConstructionError, PoolCandidate, Sector, build_mcp, sector_full_group
from .pauli import PauliString
from .screen import (
    DoubleExcitation,
    Starter,
    all_doubles,
    one_per_excitation,
    paulis_from_double,
    prescreen_doubles,
    select_dominant,
    symmetry_filter,
)
from .sim import (
    ExponentialProduct,
    basis_state,
    exact_ground_state,
    expectation,
    fidelity,
    pauli_sum_to_sparse,
    taylor_action,
)

__all__ = [
    "PROTOCOLS",
    "AnsatzSpec",
    "EvalRecord",
    "RunTrace",
    "OptimizationError",
    "build_ansatz",
    "minimize",
    "UsccdResult",
    "run_usccd",
    "PoolPlan",
    "prepare_pool",
    "NiduccResult",
    "run_niducc",
    "estimate_resources",
    "CHEMICAL_ACCURACY",
]

PROTOCOLS = ("weak", "weak-lie", "strong", "strong-lie")
CHEMICAL_ACCURACY = 1.6e-3
DEFAULT_EVAL_CAP = 50_000


class OptimizationError(ArithmeticError):
    pass


def normalize_protocol(name: str) -> str:
    p = name.strip().lower().replace("+", "-").replace("_", "-")
    if p not in PROTOCOLS:
        raise ValueError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}")
    return p


# -- ansatz ---------------------------------------------------------------------
@dataclass(frozen=True)
class AnsatzSpec:
    """``k`` repetitions of the pool; parameter ``layer * L + position``."""

    pool: tuple[PauliString, ...]
    k: int
    protocol: str = "strong-lie"

    @property
    def n_params(self) -> int:
        return self.k * len(self.pool)

    def operators(self) -> list[PauliString]:
        return list(self.pool) * self.k

    def circuit(self) -> ExponentialProduct:
        return ExponentialProduct(self.operators())

    def initial_parameters(self) -> np.ndarray:
        return np.zeros(self.n_params)


def build_ansatz(pool: Sequence[PauliString] | PoolCandidate, k: int, protocol: str = "strong-lie") -> AnsatzSpec:
    members = pool.members if isinstance(pool, PoolCandidate) else list(pool)
    if not members:
        raise ValueError("empty pool")
    if k < 1:
        raise ValueError(f"layer count must be >= 1, got {k}")
    return AnsatzSpec(tuple(p.phase_free() for p in members), int(k), normalize_protocol(protocol))


def estimate_resources(ansatz: AnsatzSpec) -> tuple[int, int]:
    """``(parameters, CNOTs)`` with ``2p - 2`` CNOTs per weight-``p`` exponential."""
    per_layer = sum(max(2 * p.weight - 2, 0) for p in ansatz.pool)
    return ansatz.n_params, ansatz.k * per_layer


# -- optimizer ------------------------------------------------------------------
@dataclass
class EvalRecord:
    index: int
    energy: float
    grad_norm: float
    fidelity: float | None = None


@dataclass
class RunTrace:
    records: list[EvalRecord] = field(default_factory=list)
    iterates: list[float] = field(default_factory=list)
    theta: np.ndarray | None = None
    energy: float = math.nan
    grad_norm: float = math.inf
    wall_time: float = 0.0
    converged: bool = False
    message: str = ""

    @property
    def evaluations(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eval_index", "energy", "grad_norm", "fidelity"])
        for r in self.records:
            fid = "" if r.fidelity is None else f"{r.fidelity:.15g}"
            w.writerow([r.index, f"{r.energy:.15g}", f"{r.grad_norm:.15g}", fid])
        return buf.getvalue()


class _EvalCap(Exception):
    pass


_C1, _C2 = 1e-4, 0.9
_APPROX_DELTA = 0.1
_MAX_LS = 40


def _line_search(evaluate, x, d, f0, g0, alpha0):
    """Wolfe line search along ``d``.

    Close to a minimum, energy differences fall below rounding noise and the
    Armijo test becomes meaningless; a step is then also accepted under the
    approximate Wolfe condition ``phi(a) <= phi(0) + eps`` and
    ``phi'(a) <= (2 delta - 1) phi'(0)``, which relies on the derivative only.
    Bracketing uses the secant on ``phi'`` when the slopes change sign.
    """
    dphi0 = float(g0 @ d)
    eps_f = 64 * np.finfo(float).eps * max(abs(f0), 1.0)

    def probe(a):
        f, g = evaluate(x + a * d)
        return f, g, float(g @ d)

    def descent_ok(a, f, dphi):
        if f <= f0 + _C1 * a * dphi0:
            return True
        return f <= f0 + eps_f and dphi <= (2 * _APPROX_DELTA - 1) * dphi0

    def curvature_ok(dphi):
        return abs(dphi) <= -_C2 * dphi0

    def zoom(lo, hi):
        # lo = (a, f, g, dphi) satisfies the descent test; hi brackets a minimizer
        for _ in range(_MAX_LS):
            if hi[3] is not None and lo[3] < 0 < hi[3]:
                a = lo[0] - lo[3] * (hi[0] - lo[0]) / (hi[3] - lo[3])
                span = hi[0] - lo[0]
                if not (min(lo[0], hi[0]) + 0.05 * abs(span) <= a <= max(lo[0], hi[0]) - 0.05 * abs(span)):
                    a = 0.5 * (lo[0] + hi[0])
            else:
                a = 0.5 * (lo[0] + hi[0])
            f, g, dphi = probe(a)
            if not descent_ok(a, f, dphi) or (f > lo[1] and f - lo[1] > eps_f):
                hi = (a, f, g, dphi)
                continue
            if curvature_ok(dphi):
                return a, f, g
            if dphi * (hi[0] - lo[0]) >= 0:
                hi = lo
            lo = (a, f, g, dphi)
            if abs(hi[0] - lo[0]) <= 1e-16 * max(1.0, abs(lo[0])):
                break
        return (lo[0], lo[1], lo[2]) if lo[0] > 0 else None

    prev = (0.0, f0, g0, dphi0)
    a = alpha0
    for i in range(_MAX_LS):
        f, g, dphi = probe(a)
        if not descent_ok(a, f, dphi) or (i > 0 and f > prev[1] + eps_f):
            return zoom(prev, (a, f, g, dphi))
        if curvature_ok(dphi):
            return a, f, g
        if dphi >= 0:
            return zoom((a, f, g, dphi), prev)
        prev = (a, f, g, dphi)
        a *= 2.0
    return prev[:3] if prev[0] > 0 else None


def minimize(
    fun: Callable[[np.ndarray], tuple],
    theta0: Sequence[float],
    grad_tol: float = 1e-10,
    max_evals: int = DEFAULT_EVAL_CAP,
) -> tuple[np.ndarray, float, RunTrace]:
    """BFGS with analytic gradients on ``fun(theta) -> (energy, gradient[, fidelity])``.

    Stops when the gradient infinity-norm is at most ``grad_tol``, after
    ``max_evals`` objective calls, or when no further descent step can be
    found even with a reset Hessian estimate.

    Raises
    ------
    OptimizationError
        The objective returned a non-finite value.
    """
    if not grad_tol > 0:
        raise ValueError("grad_tol must be positive")
    trace = RunTrace()
    start = time.perf_counter()

    def evaluate(theta):
        if len(trace.records) >= max_evals:
            raise _EvalCap
        out = fun(theta)
        e, g = float(out[0]), np.array(out[1], dtype=float)
        fid = out[2] if len(out) > 2 else None
        if not math.isfinite(e) or not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite objective at evaluation {len(trace.records)}: E={e}")
        gn = float(np.max(np.abs(g))) if g.size else 0.0
        trace.records.append(EvalRecord(len(trace.records), e, gn, fid))
        return e, g

    x = np.array(theta0, dtype=float)
    message = "gradient tolerance reached"
    f, g = evaluate(x)
    trace.iterates.append(f)
    h_inv = None
    try:
        while g.size and np.max(np.abs(g)) > grad_tol:
            d = -g if h_inv is None else -(h_inv @ g)
            if g @ d >= 0:
                h_inv, d = None, -g
            alpha0 = 1.0 if h_inv is not None else min(1.0, 0.1 / float(np.max(np.abs(g))))
            step = _line_search(evaluate, x, d, f, g, alpha0)
            if step is None:
                if h_inv is None:
                    message = "line search failed along steepest descent"
                    break
                h_inv = None
                continue
            a, f_new, g_new = step
            s, y = a * d, g_new - g
            sy = float(s @ y)
            if h_inv is None:
                h_inv = np.eye(len(x)) * (sy / float(y @ y) if sy > 0 else 1.0)
            if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
                rho = 1.0 / sy
                hy = h_inv @ y
                h_inv += (rho * rho * float(y @ hy) + rho) * np.outer(s, s) - rho * (np.outer(hy, s) + np.outer(s, hy))
            x, f, g = x + s, f_new, g_new
            trace.iterates.append(f)
    except _EvalCap:
        message = "evaluation cap reached"
    trace.theta = x
    trace.energy = f
    trace.grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
    trace.converged = trace.grad_norm <= grad_tol
    trace.message = message
    trace.wall_time = time.perf_counter() - start
    return trace.theta, trace.energy, trace


# -- UsCCD ------------------------------------------------------------------------
@dataclass
class UsccdResult:
    doubles: list[DoubleExcitation]
    energy: float
    trace: RunTrace


class _Usccd:
    """Energy and exact gradient of ``<HF| e^{-A} H e^{A} |HF>`` with
    ``A = sum_d t_d G_d``.

    The gradient uses ``d e^{A} / dt_d = int_0^1 e^{sA} G_d e^{(1-s)A} ds``
    evaluated by Gauss-Legendre quadrature; the integrand is entire, so a
    modest number of nodes reaches machine precision.
    """

    def __init__(self, system: MolecularSystem, doubles: Sequence[DoubleExcitation], hamiltonian: PauliSum):
        n = system.n_so
        self.dim = 1 << n
        self.h = pauli_sum_to_sparse(hamiltonian).real.tocsr()
        mats = []
        for d in doubles:
            g = pauli_sum_to_sparse(jw_excitation((d.k, d.l), (d.i, d.j), n))
            # odd-Y generators are real antisymmetric matrices
            mats.append(sp.csr_matrix(g.real))
        self.mats = mats
        self.stack = sp.vstack(mats).tocsr() if mats else None
        coo = [m.tocoo() for m in mats]
        self.rows = np.concatenate([c.row for c in coo]) if coo else np.empty(0, int)
        self.cols = np.concatenate([c.col for c in coo]) if coo else np.empty(0, int)
        self.vals = np.concatenate([c.data for c in coo]) if coo else np.empty(0)
        self.owner = np.concatenate([np.full(c.nnz, i) for i, c in enumerate(coo)]) if coo else np.empty(0, int)
        self.ref = np.zeros(self.dim)
        self.ref[hartree_fock_state(system)] = 1.0

    def generator(self, t: np.ndarray) -> sp.csr_matrix:
        a = sp.csr_matrix((self.vals * t[self.owner], (self.rows, self.cols)), shape=(self.dim, self.dim))
        a.sum_duplicates()
        return a

    def __call__(self, t: np.ndarray) -> tuple[float, np.ndarray]:
        t = np.asarray(t, dtype=float)
        a = self.generator(t)
        norm1 = spla.norm(a, 1) if a.nnz else 0.0
        psi = taylor_action(a, self.ref, norm1=norm1)
        h_psi = self.h @ psi
        energy = float(psi @ h_psi)
        nodes = min(64, 8 + math.ceil(3 * norm1))
        s, w = np.polynomial.legendre.leggauss(nodes)
        s, w = 0.5 * (s + 1.0), 0.5 * w
        grad = np.zeros(len(self.mats))
        for sq, wq in zip(s, w):
            right = taylor_action(a * (1.0 - sq), self.ref, norm1=norm1 * (1.0 - sq))
            left = taylor_action(a * (-sq), h_psi, norm1=norm1 * sq)
            grad += wq * ((self.stack @ right).reshape(len(self.mats), self.dim) @ left)
        return energy, 2.0 * grad


def run_usccd(
    system: MolecularSystem,
    doubles: Sequence[DoubleExcitation],
    hamiltonian: PauliSum | None = None,
    grad_tol: float = 1e-10,
    max_evals: int = DEFAULT_EVAL_CAP,
) -> UsccdResult:
    """Optimize untrotterized UCC doubles from zero amplitudes and attach ``t*``."""
    doubles = list(doubles)
    hamiltonian = build_qubit_hamiltonian(system) if hamiltonian is None else hamiltonian
    if not doubles:
        e = expectation(basis_state(system.n_so, hartree_fock_state(system)), hamiltonian)
        return UsccdResult([], e, RunTrace(energy=e, converged=True))
    obj = _Usccd(system, doubles, hamiltonian)
    theta, energy, trace = minimize(obj, np.zeros(len(doubles)), grad_tol=grad_tol, max_evals=max_evals)
    out = [d.with_amplitude(t) for d, t in zip(doubles, theta)]
    return UsccdResult(out, energy, trace)


# -- pools per protocol -------------------------------------------------------------
@dataclass
class PoolPlan:
    protocol: str
    pool: PoolCandidate
    starters: list[Starter]
    dominant: list[DoubleExcitation]
    usccd_energy: float
    full_set_count: int
    full_group_count: int
    hamiltonian: PauliSum
    hf: int


def _strings_with_source(doubles: Sequence[DoubleExcitation], n: int):
    return [(p, d) for d in doubles for p in paulis_from_double(d, n)]


def _fill_to(chosen: list[Starter], candidates: Sequence[Starter], size: int) -> list[Starter]:
    out = list(chosen[:size])
    have = {s.pauli.key for s in out}
    extra = sorted((c for c in candidates if c.pauli.key not in have), key=lambda s: (-round(s.strength, 12), s.pauli.to_label()))
    for c in extra:
        if len(out) >= size:
            break
        out.append(c)
        have.add(c.pauli.key)
    return out


def prepare_pool(
    system: MolecularSystem,
    protocol: str = "strong-lie",
    rng_seed: int = 0,
    eps_prescreen: float = 1e-2,
    eps_dominant: float = 1e-3,
    strength_epsilon: float = 1e-3,
    memory_budget: int = DEFAULT_BUDGET,
    hamiltonian: PauliSum | None = None,
) -> PoolPlan:
    """Screening, UsCCD, starter selection and pool completion for one protocol.

    Every protocol uses the operator count of the strong, Lie-completed pool,
    so comparisons are made at equal size. Non-Lie protocols take their raw
    starters, truncated or padded with the strongest unused candidates.
    """
    protocol = normalize_protocol(protocol)
    n = system.n_so
    h = build_qubit_hamiltonian(system) if hamiltonian is None else hamiltonian
    hf = hartree_fock_state(system)
    sector = Sector.from_system(system)
    full_set, full_group = sector_full_group(sector, memory_budget)

    def in_full_set(p: PauliString) -> bool:
        return p in full_set

    screened = prescreen_doubles(system, eps_prescreen)
    usccd = run_usccd(system, screened, h)
    dominant = select_dominant(usccd.doubles, eps_dominant)
    strong_all = symmetry_filter(_strings_with_source(dominant, n), system, h, hf, strength_epsilon)
    strong = one_per_excitation(strong_all, in_full_set)
    try:
        strong_pool = build_mcp([s.pauli for s in strong], full_set, full_group, rng_seed)
    except MCPConstructionError as exc:
        if not exc.candidate.diagnostics.get("exhausted"):
            raise
        # tiny sectors (e.g. 4 qubits) admit no complete pool at all
        strong = one_per_excitation(strong_all)
        members = [s.pauli for s in strong]
        strong_pool = PoolCandidate(members, ["starter"] * len(members), rng_seed, 0, {"complete": False})
    size = len(strong_pool)

    if protocol == "strong-lie":
        pool, starters = strong_pool, strong
    elif protocol == "strong":
        starters = _fill_to(one_per_excitation(strong_all), strong_all, size)
        if len(starters) < size:
            others = symmetry_filter(_strings_with_source(all_doubles(system, hf), n), system, h, hf, 0.0)
            starters = _fill_to(starters, others, size)
        pool = PoolCandidate([s.pauli for s in starters], ["starter"] * len(starters), rng_seed)
    else:
        keys = {d.indices for d in dominant}
        rest = [d for d in all_doubles(system, hf) if d.indices not in keys]
        weak_all = symmetry_filter(_strings_with_source(rest, n), system, h, hf, strength_epsilon, weak=True)
        if not weak_all:
            raise ValueError(f"no weak starters at strength threshold {strength_epsilon:g}")
        if protocol == "weak-lie":
            weak = one_per_excitation(weak_all, in_full_set)[: len(strong)]
            if not weak:
                raise ValueError("no weak starters inside the FullSet")
            pool = build_mcp([s.pauli for s in weak], full_set, full_group, rng_seed, target_size=size)
            starters = weak
        else:
            starters = _fill_to(one_per_excitation(weak_all), weak_all, size)
            pool = PoolCandidate([s.pauli for s in starters], ["starter"] * len(starters), rng_seed)
    return PoolPlan(protocol, pool, starters, dominant, usccd.energy, full_set.count, full_group.count, h, hf)


# -- pipeline -----------------------------------------------------------------------
@dataclass
class NiduccResult:
    report: dict
    trace: RunTrace
    ansatz: AnsatzSpec
    plan: PoolPlan
    state: np.ndarray

    def report_json(self, timing: bool = True) -> str:
        rep = dict(self.report)
        if not timing:
            rep.pop("wall_time", None)
        return json.dumps(rep, indent=2, sort_keys=True) + "\n"


def run_niducc(
    system: MolecularSystem,
    k: int = 8,
    protocol: str = "strong-lie",
    rng_seed: int = 0,
    eval_cap: int = DEFAULT_EVAL_CAP,
    grad_tol: float = 1e-10,
    eps_prescreen: float = 1e-2,
    eps_dominant: float = 1e-3,
    track_fidelity: bool = False,
    memory_budget: int = DEFAULT_BUDGET,
    plan: PoolPlan | None = None,
) -> NiduccResult:
    """Full NI-DUCC-VQE run; the report compares against exact diagonalization."""
    start = time.perf_counter()
    if plan is None:
        plan = prepare_pool(system, protocol, rng_seed, eps_prescreen, eps_dominant, memory_budget=memory_budget)
    ansatz = build_ansatz(plan.pool, k, plan.protocol)
    h = pauli_sum_to_sparse(plan.hamiltonian)
    n = system.n_so
    e_fci, psi_fci = exact_ground_state(h, (system.n_alpha, system.n_beta), n=n)
    circuit = ansatz.circuit()
    ref = basis_state(n, plan.hf)

    def objective(theta):
        e, g, psi = circuit.energy_and_gradient(theta, h, ref)
        if track_fidelity:
            return e, g, fidelity(psi, psi_fci)
        return e, g

    theta, energy, trace = minimize(objective, ansatz.initial_parameters(), grad_tol, eval_cap)
    psi = circuit.state(theta, ref)
    params, cnots = estimate_resources(ansatz)
    meta = system.meta or {}
    report = {
        "system": meta.get("molecule", system.name),
        "geometry": meta.get("bond_length_angstrom"),
        "k": k,
        "protocol": plan.protocol,
        "seed": rng_seed,
        "pool_size": len(plan.pool),
        "starters": len(plan.starters),
        "parameters": params,
        "cnots": cnots,
        "usccd_energy": plan.usccd_energy,
        "energy": energy,
        "fci_energy": e_fci,
        "error": energy - e_fci,
        "fidelity": fidelity(psi, psi_fci),
        "grad_norm": trace.grad_norm,
        "converged": trace.converged,
        "evaluations": trace.evaluations,
        "pool": [p.to_label() for p in plan.pool.members],
        "wall_time": time.perf_counter() - start,
    }
    return NiduccResult(report, trace, ansatz, plan, psi)
