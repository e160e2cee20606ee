"""Time marching with lagged nonlinear iterations.

Each step solves the condensed global system repeatedly, re-evaluating the
reaction coefficient at the latest cell values, until the field stops moving.
Only cell-node increments are kept in the history ledger, since the time
derivative reaches the integral identity through the volume term alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .condense import (
    NonlinearParams,
    build_S_and_b,
    condense,
    hs_inverse,
    nonlinear_diagonal,
    recover_interior,
)
from .frac_time import FractionalScheme, HistoryLedger, history_term, time_coeff
from .global_system import BoundaryCondition, DofMap, assemble_global, build_dof_map, solve_sparse
from .kernels import DEFAULT_LAYOUT, DEFAULT_QUADRATURE, DiscontinuousLayout, QuadratureConfig
from .mesh import Mesh, quad_areas
from .subdomain import SubdomainMatrices, assemble_all

__all__ = [
    "ConvergenceError",
    "ProblemBinding",
    "Probe",
    "SimulationConfig",
    "Assets",
    "SimulationState",
    "Snapshot",
    "ErrorRecord",
    "SimulationResult",
    "prepare_assets",
    "initial_state",
    "advance_one_step",
    "run_simulation",
    "error_metrics",
    "probe_nodes",
    "discrete_residual",
    "n_steps",
]


class ConvergenceError(RuntimeError):
    pass


def _field(value, x, y, *t):
    if value is None:
        return np.zeros(np.shape(x))
    if callable(value):
        return np.broadcast_to(np.asarray(value(x, y, *t), dtype=float), np.shape(x)).copy()
    return np.full(np.shape(x), float(value))


@dataclass
class ProblemBinding:
    """Boundary data, initial field, source and (optional) exact solution.

    ``phi0(x, y)``, ``source(x, y, t)`` and ``exact(x, y, t)`` may be callables
    or constants; ``source=None`` means no source.
    """

    bcs: dict[str, BoundaryCondition]
    phi0: float | Callable = 0.0
    source: float | Callable | None = None
    exact: Callable | None = None


@dataclass(frozen=True)
class Probe:
    """A line through ``point`` along ``direction``, or the whole field.

    ``tolerance=None`` selects nodes within 1e-6 plus half the local element
    size of the line.
    """

    name: str
    point: tuple[float, float] | None = None
    direction: tuple[float, float] | None = None
    tolerance: float | None = None

    @property
    def is_line(self) -> bool:
        return self.point is not None


@dataclass
class SimulationConfig:
    scheme: FractionalScheme
    params: NonlinearParams
    problem: ProblemBinding
    t_end: float
    tol_nl: float = 1e-8
    max_nl_iters: int = 50
    probes: list[Probe] = field(default_factory=list)
    snapshot_times: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.t_end >= self.dt * (1.0 - 1e-9):
            raise ValueError(f"t_end={self.t_end} must be at least dt={self.dt}")
        if not self.tol_nl > 0:
            raise ValueError(f"tol_nl must be positive, got {self.tol_nl}")
        if self.max_nl_iters < 1:
            raise ValueError("max_nl_iters must be at least 1")

    @property
    def dt(self) -> float:
        return self.scheme.dt


def n_steps(t_end: float, dt: float) -> int:
    return max(1, math.ceil(t_end / dt - 1e-9))


@dataclass
class Assets:
    mesh: Mesh
    blocks: SubdomainMatrices
    dofmap: DofMap
    areas: np.ndarray
    assembly_seconds: float = 0.0


def prepare_assets(
    mesh: Mesh,
    bcs: dict[str, BoundaryCondition],
    layout: DiscontinuousLayout = DEFAULT_LAYOUT,
    qconfig: QuadratureConfig = DEFAULT_QUADRATURE,
    workers: int = 1,
) -> Assets:
    mesh.validate()
    t0 = time.perf_counter()
    dofmap = build_dof_map(mesh, bcs, layout=layout)
    blocks = assemble_all(mesh, layout, qconfig, workers=workers)
    return Assets(mesh, blocks, dofmap, quad_areas(mesh.all_corners()), time.perf_counter() - t0)


@dataclass
class SimulationState:
    phi_b: np.ndarray  # (Ns, 8)
    q_b: np.ndarray  # (Ns, 8)
    phi_d: np.ndarray  # (Ns, 4)
    ledger: HistoryLedger
    n: int = 0
    iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    seconds: dict[str, float] = field(default_factory=lambda: {"condense": 0.0, "solve": 0.0, "history": 0.0})

    def __post_init__(self):
        if len(self.ledger) != self.n:
            raise ValueError("ledger length must equal the step index")


def initial_state(config: SimulationConfig, assets: Assets) -> SimulationState:
    dm = assets.dofmap
    bp, cp = dm.boundary_points, dm.cell_points
    phi_b = _field(config.problem.phi0, bp[..., 0], bp[..., 1])
    phi_d = _field(config.problem.phi0, cp[..., 0], cp[..., 1])
    return SimulationState(phi_b, np.zeros_like(phi_b), phi_d, HistoryLedger(phi_d.ravel()))


def advance_one_step(state: SimulationState, config: SimulationConfig, assets: Assets) -> SimulationState:
    """Advance ``state`` from t_n to t_{n+1} in place and return it."""
    scheme, params = config.scheme, config.params
    dm, blocks = assets.dofmap, assets.blocks
    ns = dm.n_subdomains
    n = state.n
    t_next = (n + 1) * scheme.dt

    tic = time.perf_counter()
    c_time = time_coeff(scheme, n)
    P = np.asarray(history_term(scheme, state.ledger, n)).reshape(ns, 4)
    state.seconds["history"] += time.perf_counter() - tic

    cp = dm.cell_points
    f_next = _field(config.problem.source, cp[..., 0], cp[..., 1], t_next)
    phi_known, q_known = dm.known_values(t_next)

    lag = state.phi_d
    prev = np.concatenate([state.phi_b.ravel(), state.phi_d.ravel()])
    change = math.inf
    for it in range(1, config.max_nl_iters + 1):
        tic = time.perf_counter()
        M = nonlinear_diagonal(params, lag)
        S_dd, S_bd, b_dd, b_bd = build_S_and_b(blocks, M, c_time, state.phi_d, P, f_next, params.rho)
        cond = condense(blocks, S_dd, S_bd, b_dd, b_bd, X_inv=hs_inverse(S_dd))
        state.seconds["condense"] += time.perf_counter() - tic

        tic = time.perf_counter()
        system = assemble_global(cond, dm, phi_known, q_known)
        x, report = solve_sparse(system, dm)
        state.seconds["solve"] += time.perf_counter() - tic

        phi_b, q_b = dm.unpack(x, phi_known, q_known)
        phi_d = recover_interior(cond, blocks, phi_b, q_b)
        cur = np.concatenate([phi_b.ravel(), phi_d.ravel()])
        if not np.all(np.isfinite(cur)):
            raise ConvergenceError(f"non-finite field at step {n + 1}, iteration {it}")
        change = float(np.abs(cur - prev).max())
        scale = float(np.abs(cur).max())
        prev, lag = cur, phi_d
        if it > 1 and change <= config.tol_nl * scale:
            break
    else:
        raise ConvergenceError(
            f"lagging iteration did not converge in {config.max_nl_iters} iterations at step {n + 1} "
            f"(last max change {change:.3e})"
        )

    state.ledger.append(phi_d - state.phi_d)
    state.phi_b, state.q_b, state.phi_d = phi_b, q_b, phi_d
    state.n = n + 1
    state.iterations.append(it)
    state.residuals.append(report.residual)
    return state


def discrete_residual(
    blocks: SubdomainMatrices,
    params: NonlinearParams,
    c_time: float,
    phi_b,
    q_b,
    phi_d,
    phi_n,
    P,
    f_next,
) -> float:
    """Max-norm residual of the un-linearised per-subdomain equations.

    Boundary rows: ``H_bb phi_b - G_bb q_b + C_bd r / rho = 0`` and cell rows
    ``phi_d + H_db phi_b - G_db q_b + C_dd r / rho = 0`` with
    ``r = c_time (phi_d - phi_n + P) - N(phi_d) - f``.
    """
    r = (c_time * (phi_d - phi_n + P) - params.reaction(phi_d) - f_next) / params.rho
    mv = lambda A, v: np.einsum("...ij,...j->...i", A, v)  # noqa: E731
    rb = mv(blocks.H_bb, phi_b) - mv(blocks.G_bb, q_b) + mv(blocks.C_bd, r)
    rd = phi_d + mv(blocks.H_db, phi_b) - mv(blocks.G_db, q_b) + mv(blocks.C_dd, r)
    return float(max(np.abs(rb).max(), np.abs(rd).max()))


def error_metrics(exact, numeric) -> tuple[float, float]:
    """(E_inf, E_2): max abs difference, and l2 difference relative to the exact l2 norm."""
    exact = np.asarray(exact, dtype=float).ravel()
    numeric = np.asarray(numeric, dtype=float).ravel()
    if exact.shape != numeric.shape:
        raise ValueError(f"length mismatch: {exact.size} exact vs {numeric.size} numeric")
    norm = np.linalg.norm(exact)
    if norm == 0.0:
        raise ValueError("E_2 undefined: exact values have zero norm")
    diff = numeric - exact
    return float(np.abs(diff).max()), float(np.linalg.norm(diff) / norm)


def _all_nodes(dm: DofMap, state: SimulationState | None = None):
    """Points, owning subdomain and (optionally) values of all nodes, boundary then cell."""
    ns = dm.n_subdomains
    pts = np.concatenate([dm.boundary_points.reshape(-1, 2), dm.cell_points.reshape(-1, 2)])
    owner = np.concatenate([np.repeat(np.arange(ns), 8), np.repeat(np.arange(ns), 4)])
    vals = None
    if state is not None:
        vals = np.concatenate([state.phi_b.ravel(), state.phi_d.ravel()])
    return pts, owner, vals


def _unique_nodes(dm: DofMap) -> np.ndarray:
    """Indices into the node list with coincident interface nodes collapsed."""
    ns = dm.n_subdomains
    keep = np.ones(12 * ns, dtype=bool)
    # the second node of every interface pair shares a phi dof with the first
    seen = set()
    for s in range(ns):
        for j in range(8):
            col = dm.phi_col[s, j]
            if dm.node_tag[s, j] is None:
                if col in seen:
                    keep[8 * s + j] = False
                seen.add(col)
    return np.flatnonzero(keep)


def probe_nodes(dm: DofMap, areas: np.ndarray, probe: Probe):
    """Node indices selected by ``probe`` and their arclength along the line.

    Returns ``(index, s)`` sorted by ``s`` (zeros for whole-field probes).
    """
    pts, owner, _ = _all_nodes(dm)
    idx = _unique_nodes(dm)
    if not probe.is_line:
        return idx, np.zeros(idx.size)
    p = np.asarray(probe.point, float)
    d = np.asarray(probe.direction, float)
    d = d / np.hypot(*d)
    rel = pts[idx] - p
    dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])
    if probe.tolerance is None:
        band = 1e-6 + 0.5 * np.sqrt(areas[owner[idx]])
    else:
        band = probe.tolerance
    sel = dist <= band
    idx, s = idx[sel], rel[sel] @ d
    order = np.lexsort((pts[idx, 1], pts[idx, 0], s))
    return idx[order], s[order]


@dataclass
class Snapshot:
    time: float
    step: int
    points: np.ndarray  # (N, 2)
    phi: np.ndarray  # (N,)


@dataclass
class ErrorRecord:
    """Probe samples at one time; the metrics are NaN when no exact solution is bound."""

    probe: str
    time: float
    e_inf: float
    e_2: float
    n_nodes: int
    s: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    exact: np.ndarray = field(repr=False)


@dataclass
class SimulationResult:
    state: SimulationState
    snapshots: list[Snapshot]
    errors: list[ErrorRecord]
    timing: dict[str, float]
    steps: int


def _record(state, config, assets, t, snapshots, errors, with_errors=True):
    dm = assets.dofmap
    pts, _, vals = _all_nodes(dm, state)
    idx = _unique_nodes(dm)
    snapshots.append(Snapshot(t, state.n, pts[idx], vals[idx]))
    if not with_errors:
        return
    exact = config.problem.exact
    for probe in config.probes:
        sel, s = probe_nodes(dm, assets.areas, probe)
        if not sel.size:
            raise ValueError(f"probe {probe.name!r} selects no nodes")
        if exact is None:
            ex = np.full(sel.size, np.nan)
            e_inf = e_2 = math.nan
        else:
            ex = np.asarray(exact(pts[sel, 0], pts[sel, 1], t), dtype=float)
            e_inf, e_2 = error_metrics(ex, vals[sel])
        errors.append(ErrorRecord(probe.name, t, e_inf, e_2, int(sel.size), s, pts[sel], vals[sel], ex))


def run_simulation(
    config: SimulationConfig,
    mesh: Mesh | None = None,
    assets: Assets | None = None,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> SimulationResult:
    """Run ``ceil(t_end / dt)`` steps, recording snapshots and probe errors.

    Snapshots are taken at the step nearest each requested time; the final
    time is always recorded.
    """
    if assets is None:
        if mesh is None:
            raise ValueError("need a mesh or prepared assets")
        assets = prepare_assets(mesh, config.problem.bcs, workers=workers)
    dt = config.dt
    total = n_steps(config.t_end, dt)
    wanted: dict[int, list[float]] = {}
    for t in config.snapshot_times:
        k = min(max(int(round(t / dt)), 0), total)
        wanted.setdefault(k, []).append(k * dt)
    wanted.setdefault(total, [])
    if not wanted[total]:
        wanted[total].append(total * dt)

    t0 = time.perf_counter()
    state = initial_state(config, assets)
    snapshots: list[Snapshot] = []
    errors: list[ErrorRecord] = []
    if 0 in wanted:
        _record(state, config, assets, 0.0, snapshots, errors, with_errors=False)
    for _ in range(total):
        advance_one_step(state, config, assets)
        if state.n in wanted:
            for t in dict.fromkeys(wanted[state.n]):
                _record(state, config, assets, t, snapshots, errors)
        if progress is not None:
            progress(state.n, total)
    timing = dict(state.seconds)
    timing["assembly"] = assets.assembly_seconds
    timing["march"] = time.perf_counter() - t0
    return SimulationResult(state, snapshots, errors, timing, total)
