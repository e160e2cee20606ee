"""Acceptance suites: measured values against their targets.

Each suite returns a list of :class:`Check`. The heavy problem suites run
full simulations; the algebraic ones run randomized oracle comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .condense import NonlinearParams, build_S_and_b, condense, hs_inverse, recover_interior
from .driver import ProblemBinding, Probe, SimulationConfig, prepare_assets, run_simulation
from .frac_time import (
    CAPUTO,
    FRACTAL_FRACTIONAL,
    FractionalScheme,
    HistoryLedger,
    caputo_oracle,
    history_term,
    time_coeff,
)
from .global_system import DIRICHLET, BoundaryCondition
from .kernels import integrate_cell
from .mesh import generate_rectangle
from .problems import get_problem
from .reference import bessel, find_roots, mittag_leffler
from .subdomain import SubdomainMatrices, assemble_all, equipotential_residuals

__all__ = ["Check", "SUITES", "run_suite", "random_instance", "monolithic_solve", "condensed_solve"]


@dataclass
class Check:
    name: str
    measured: float
    target: float
    passed: bool

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name}: measured {self.measured:.3e}, target {self.target:.3e}"


def _le(name, measured, target) -> Check:
    return Check(name, float(measured), float(target), bool(measured <= target))


# ---------------------------------------------------------------- fractional


def _discrete_caputo(series, alpha, dt, kind=CAPUTO, beta=1.0):
    """Scheme value at the last sample of ``series`` (history built from increments)."""
    y = np.asarray(series, float)
    n = len(y) - 2  # step t_n -> t_{n+1} with t_{n+1} the last sample
    scheme = FractionalScheme(kind, alpha, dt, beta)
    ledger = HistoryLedger(y[:1])
    for k in range(n):
        ledger.append(y[k + 1: k + 2] - y[k: k + 1])
    P = history_term(scheme, ledger, n)[0]
    return time_coeff(scheme, n) * (y[n + 1] - y[n] + P)


def suite_fractional(rng=None) -> list[Check]:
    rng = np.random.default_rng(12345) if rng is None else rng
    worst = 0.0
    for _ in range(1000):
        L = int(rng.integers(2, 51))
        alpha = float(rng.uniform(0.05, 0.95))
        dt = float(10 ** rng.uniform(-3, -1))
        y = rng.standard_normal(L)
        a = _discrete_caputo(y, alpha, dt)
        b = caputo_oracle(y, alpha, dt)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    lin = 0.0
    for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
        dt = 0.01
        for L in (2, 10, 50):
            t = dt * np.arange(L)
            exact = t[-1] ** (1 - alpha) / math.gamma(2 - alpha)
            lin = max(lin, abs(_discrete_caputo(t, alpha, dt) - exact))
    red = 0.0
    for _ in range(200):
        L = int(rng.integers(2, 51))
        alpha = float(rng.uniform(0.05, 0.95))
        dt = float(10 ** rng.uniform(-3, -1))
        y = rng.standard_normal(L)
        y[0] = 0.0
        a = _discrete_caputo(y, alpha, dt)
        b = _discrete_caputo(y, alpha, dt, FRACTAL_FRACTIONAL, 1.0)
        red = max(red, abs(a - b) / max(1.0, abs(a)))
    return [
        _le("discrete Caputo vs kernel-integral oracle (1000 series)", worst, 1e-12),
        _le("exactness on phi(t) = t", lin, 1e-10),
        _le("fractal-fractional beta=1, phi0=0 reduces to Caputo", red, 1e-12),
    ]


# ---------------------------------------------------------------- condensation


def random_instance(rng, mixed=True, max_cond=1e3):
    """Random, well-conditioned subdomain system.

    Returns ``(blocks, params)`` where ``params`` holds everything needed to
    build S and b: M diagonal, c_time, phi_n, P, f, rho and a Dirichlet mask
    with the prescribed boundary values. Draws whose monolithic matrix has a
    condition number above ``max_cond`` are rejected.
    """
    while True:
        blocks, data = _draw_instance(rng, mixed)
        K, _, unknown_cols = _monolithic_system(blocks, data)
        if np.linalg.cond(K[:, unknown_cols]) <= max_cond:
            return blocks, data


def _draw_instance(rng, mixed):
    blocks = SubdomainMatrices(
        H_bb=0.5 * np.eye(8) + 0.1 * rng.standard_normal((8, 8)),
        G_bb=np.eye(8) + 0.1 * rng.standard_normal((8, 8)),
        C_bd=0.1 * rng.standard_normal((8, 4)),
        H_db=0.1 * rng.standard_normal((4, 8)),
        G_db=0.1 * rng.standard_normal((4, 8)),
        C_dd=0.1 * rng.standard_normal((4, 4)),
    )
    dirichlet = rng.random(8) < 0.5 if mixed else np.ones(8, dtype=bool)
    data = dict(
        M=rng.uniform(-1, 1, 4),
        c_time=float(rng.uniform(0.5, 3.0)),
        phi_n=rng.standard_normal(4),
        P=rng.standard_normal(4),
        f=rng.standard_normal(4),
        rho=float(rng.uniform(0.5, 2.0)),
        dirichlet=dirichlet,
        known=rng.standard_normal(8),
    )
    return blocks, data


def _monolithic_system(blocks, data):
    S_dd, S_bd, b_dd, b_bd = build_S_and_b(
        blocks, data["M"], data["c_time"], data["phi_n"], data["P"], data["f"], data["rho"]
    )
    # rows: [H_bb  -G_bb  S_bd ; H_db  -G_db  I + S_dd] [phi_b; q_b; phi_d] = [b_bd; b_dd]
    K = np.zeros((12, 20))
    K[:8, :8], K[:8, 8:16], K[:8, 16:] = blocks.H_bb, -blocks.G_bb, S_bd
    K[8:, :8], K[8:, 8:16], K[8:, 16:] = blocks.H_db, -blocks.G_db, np.eye(4) + S_dd
    rhs = np.concatenate([b_bd, b_dd])
    dir_ = data["dirichlet"]
    known_cols = np.concatenate([np.flatnonzero(dir_), 8 + np.flatnonzero(~dir_)])
    unknown_cols = np.setdiff1d(np.arange(20), known_cols)
    return K, rhs, unknown_cols


def monolithic_solve(blocks: SubdomainMatrices, data) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense 12x12 solve of the uncondensed subdomain equations."""
    K, rhs, unknown_cols = _monolithic_system(blocks, data)
    dir_ = data["dirichlet"]
    known_cols = np.concatenate([np.flatnonzero(dir_), 8 + np.flatnonzero(~dir_)])
    z = np.zeros(20)
    z[known_cols] = np.concatenate([data["known"][dir_], data["known"][~dir_]])
    sol = np.linalg.solve(K[:, unknown_cols], rhs - K[:, known_cols] @ z[known_cols])
    z[unknown_cols] = sol
    return z[:8], z[8:16], z[16:]


def condensed_solve(blocks: SubdomainMatrices, data):
    S_dd, S_bd, b_dd, b_bd = build_S_and_b(
        blocks, data["M"], data["c_time"], data["phi_n"], data["P"], data["f"], data["rho"]
    )
    cond = condense(blocks, S_dd, S_bd, b_dd, b_bd)
    dir_ = data["dirichlet"]
    phi = np.where(dir_, data["known"], 0.0)
    q = np.where(dir_, 0.0, data["known"])
    # unknown x_j is q_j on Dirichlet nodes and phi_j on Neumann nodes
    A = np.where(dir_[None, :], -cond.Gbar, cond.Hbar)
    rhs = cond.bbar - cond.Hbar @ phi + cond.Gbar @ q
    x = np.linalg.solve(A, rhs)
    phi = np.where(dir_, phi, x)
    q = np.where(dir_, x, q)
    return phi, q, recover_interior(cond, blocks, phi, q)


def suite_condensation(rng=None) -> list[Check]:
    rng = np.random.default_rng(2024) if rng is None else rng
    worst = 0.0
    for _ in range(1000):
        blocks, data = random_instance(rng)
        a = np.concatenate(monolithic_solve(blocks, data))
        b = np.concatenate(condensed_solve(blocks, data))
        worst = max(worst, float(np.abs(a - b).max()))
    S = rng.uniform(-0.2, 0.2, (1000, 4, 4))
    hs = float(np.abs(hs_inverse(S) - np.linalg.inv(np.eye(4) + S)).max())
    return [
        _le("condensed solve + recovery vs monolithic 12x12 (1000 instances)", worst, 1e-10),
        _le("rank-one accumulated inverse vs direct inverse (1000 matrices)", hs, 1e-10),
    ]


# ---------------------------------------------------------------- kernels


def acceptance_meshes():
    """Meshes used by the problem suites."""
    out = {f"problem1 {n}x{n}": get_problem("problem1").build_mesh(nx=n, ny=n) for n in (8, 16, 32)}
    for pid in ("problem2", "problem3", "problem4"):
        out[pid] = get_problem(pid).build_mesh()
    return out


def stationary_linear_field(n_steps: int = 100, alpha: float = 0.5) -> float:
    """Max deviation from phi = x after ``n_steps`` steps with consistent data."""
    mesh = generate_rectangle(4, 4, (0.0, 1.0), (0.0, 1.0))
    bc = BoundaryCondition(DIRICHLET, lambda x, y, t: x)
    binding = ProblemBinding({t: bc for t in ("left", "right", "bottom", "top")}, phi0=lambda x, y: x,
                             exact=lambda x, y, t: x)
    dt = 0.01
    cfg = SimulationConfig(FractionalScheme(CAPUTO, alpha, dt), NonlinearParams(), binding,
                           t_end=n_steps * dt, probes=[Probe("all")])
    res = run_simulation(cfg, mesh=mesh)
    return max(e.e_inf for e in res.errors)


def suite_kernels(meshes=None) -> list[Check]:
    checks = []
    meshes = acceptance_meshes() if meshes is None else meshes
    for name, mesh in meshes.items():
        blocks = assemble_all(mesh)
        r = float(np.abs(equipotential_residuals(blocks)).max())
        checks.append(_le(f"equipotential row sums, {name} ({mesh.n_quads} quads)", r, 1e-8))
    sq = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    val = float(integrate_cell(np.zeros(2), sq, local=np.zeros(2)).sum())
    exact = (1.5 - math.pi / 4 + math.log(2) / 2) / (2 * math.pi)
    checks.append(_le("log-kernel integral over the unit square at its centre", abs(val - exact), 1e-12))
    checks.append(_le("stationary field phi = x over 100 steps", stationary_linear_field(), 1e-6))
    return checks


# ---------------------------------------------------------------- problems


def problem_run(pid: str, alpha: float, mesh=None, t_end=None, snapshots=None, probes=None, workers=1):
    """Run a registered problem with its defaults; returns the SimulationResult."""
    spec = get_problem(pid)
    d = spec.defaults
    mesh = spec.build_mesh() if mesh is None else mesh
    binding = spec.bind(alpha, d["rho"], sorted(set(mesh.outer_tags().values())))
    cfg = SimulationConfig(
        FractionalScheme(CAPUTO, alpha, d["dt"]),
        NonlinearParams(*d["m"], rho=d["rho"]),
        binding,
        t_end=d["t_end"] if t_end is None else t_end,
        probes=d["probes"] if probes is None else probes,
        snapshot_times=d["snapshots"] if snapshots is None else snapshots,
    )
    assets = prepare_assets(mesh, binding.bcs, workers=workers)
    return run_simulation(cfg, assets=assets)


def _final(res):
    return max(res.errors, key=lambda e: e.time)


def suite_problem1(alphas=(0.5, 0.6, 0.7, 0.8, 0.9), convergence=True) -> list[Check]:
    checks = []
    for a in alphas:
        e = _final(problem_run("problem1", a, snapshots=[0.5]))
        checks.append(_le(f"problem1 alpha={a} E_inf at t=0.5", e.e_inf, 7.5e-4))
        checks.append(_le(f"problem1 alpha={a} E_2 at t=0.5", e.e_2, 1.5e-3))
    if convergence:
        spec = get_problem("problem1")
        errs = []
        for n in (8, 16, 32):
            e = _final(problem_run("problem1", 0.5, mesh=spec.build_mesh(nx=n, ny=n), snapshots=[0.5]))
            errs.append(e.e_inf)
        checks.append(_le("problem1 64-quad E_inf", errs[0], 1.1e-3))
        checks.append(_le("problem1 E_inf increase 64 -> 256 quads", errs[1] - errs[0], 0.0))
        checks.append(_le("problem1 E_inf increase 256 -> 1024 quads", errs[2] - errs[1], 0.0))
    return checks


PROBLEM2_TARGETS = {0.3: 9.5e-3, 0.5: 4.1e-3, 0.7: 5.2e-3, 0.9: 7.2e-3}


def suite_problem2(alphas=(0.3, 0.5, 0.7, 0.9)) -> list[Check]:
    return [
        _le(f"problem2 alpha={a} E_2 at t=1", _final(problem_run("problem2", a)).e_2, PROBLEM2_TARGETS[a])
        for a in alphas
    ]


def suite_problem3(alphas=(0.3, 0.5, 0.7, 0.9)) -> list[Check]:
    return [_le(f"problem3 alpha={a} E_2 at t=1", _final(problem_run("problem3", a)).e_2, 1e-2) for a in alphas]


def suite_problem4(alphas=(0.3, 0.5, 0.7, 0.9)) -> list[Check]:
    return [
        _le(f"problem4 alpha={a} E_2 on y=10 at t=0.1", _final(problem_run("problem4", a)).e_2, 1e-2)
        for a in alphas
    ]


# ---------------------------------------------------------------- special functions


def _bisect(f, a, b, tol=1e-14):
    fa = f(a)
    while b - a > tol * max(1.0, abs(a)):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def suite_special() -> list[Check]:
    x = np.concatenate([np.geomspace(1e-3, 1.0, 200), np.linspace(1.0, 200.0, 20000)])
    w = bessel("J1", x) * bessel("Y0", x) - bessel("J0", x) * bessel("Y1", x)
    wronskian = float(np.abs(w - 2.0 / (math.pi * x)).max())

    roots = find_roots("J0", 20)
    # McMahon's estimate (i - 1/4) pi is within 0.1 of the i-th zero
    oracle = np.array([
        _bisect(lambda v: bessel("J0", v), (i - 0.25) * math.pi - 0.3, (i - 0.25) * math.pi + 0.3)
        for i in range(1, 21)
    ])
    zeros = float(np.abs(roots - oracle).max())

    z = -np.concatenate([np.linspace(0.0, 5.0, 51), np.geomspace(5.0, 500.0, 40)])
    e1 = float(np.abs(mittag_leffler(1.0, z) - np.exp(z)).max())
    zh = -np.concatenate([np.linspace(0.0, 5.0, 51), np.geomspace(5.0, 50.0, 30)])
    ehalf = float(np.abs(mittag_leffler(0.5, zh) - special.erfcx(-zh)).max())
    return [
        _le("Bessel Wronskian on (0, 200]", wronskian, 1e-9),
        _le("first 20 J0 zeros vs bisection", zeros, 1e-10),
        _le("E_1(z) = exp(z)", e1, 1e-9),
        _le("E_1/2(z) = exp(z^2) erfc(-z)", ehalf, 1e-9),
    ]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "fractional": suite_fractional,
    "kernels": suite_kernels,
    "condensation": suite_condensation,
    "problem1": suite_problem1,
    "problem2": suite_problem2,
    "problem3": suite_problem3,
    "problem4": suite_problem4,
    "special": suite_special,
}


def run_suite(name: str) -> list[Check]:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn()
