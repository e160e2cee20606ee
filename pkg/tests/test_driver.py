import math

import numpy as np
import pytest

from ldbem.condense import NonlinearParams
from ldbem.driver import (
    ConvergenceError,
    ProblemBinding,
    Probe,
    SimulationConfig,
    advance_one_step,
    discrete_residual,
    error_metrics,
    initial_state,
    n_steps,
    prepare_assets,
    probe_nodes,
    run_simulation,
)
from ldbem.frac_time import CAPUTO, FRACTAL_FRACTIONAL, FractionalScheme, history_term, time_coeff
from ldbem.global_system import DIRICHLET, BoundaryCondition
from ldbem.mesh import generate_rectangle
from ldbem.problems import get_problem
from ldbem.verify import stationary_linear_field

SIDES = ("left", "right", "bottom", "top")


def constant_binding(value):
    return ProblemBinding({t: BoundaryCondition(DIRICHLET, value) for t in SIDES}, phi0=value)


@pytest.fixture(scope="module")
def p1_small():
    """Problem 1 on a coarse 4x8 mesh with its registered data."""
    spec = get_problem("problem1")
    mesh = spec.build_mesh(nx=4, ny=8)
    binding = spec.bind(0.5, 1.0, mesh.tags)
    return mesh, binding, prepare_assets(mesh, binding.bcs)


def test_error_metrics_examples():
    assert error_metrics([3.0, 4.0], [3.0, 4.0]) == (0.0, 0.0)
    assert error_metrics([3.0, 4.0], [0.0, 0.0]) == (4.0, 1.0)
    e_inf, e_2 = error_metrics([3.0, 4.0], [3.3, 4.4])
    assert e_inf == pytest.approx(0.4, abs=1e-15) and e_2 == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(ValueError, match="zero norm"):
        error_metrics([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError, match="length"):
        error_metrics([1.0], [1.0, 2.0])


def test_step_count():
    assert n_steps(0.5, 2.5e-3) == 200
    assert n_steps(0.1, 0.1) == 1
    assert n_steps(1.0, 1.0 / 255.0) == 255
    mesh = generate_rectangle(1, 1)
    cfg = SimulationConfig(FractionalScheme(CAPUTO, 0.5, 0.1), NonlinearParams(), constant_binding(2.0), t_end=0.1)
    res = run_simulation(cfg, mesh=mesh)
    assert res.steps == 1 and res.state.n == 1 and len(res.state.ledger) == 1


def test_config_validation():
    scheme = FractionalScheme(CAPUTO, 0.5, 0.1)
    with pytest.raises(ValueError):
        SimulationConfig(scheme, NonlinearParams(), constant_binding(0.0), t_end=0.05)
    with pytest.raises(ValueError):
        SimulationConfig(scheme, NonlinearParams(), constant_binding(0.0), t_end=1.0, tol_nl=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(scheme, NonlinearParams(), constant_binding(0.0), t_end=1.0, max_nl_iters=0)


def test_constant_state_is_steady():
    mesh = generate_rectangle(3, 3)
    cfg = SimulationConfig(FractionalScheme(CAPUTO, 0.4, 0.05), NonlinearParams(), constant_binding(2.5), t_end=0.5)
    res = run_simulation(cfg, mesh=mesh)
    st = res.state
    assert np.abs(st.phi_b - 2.5).max() <= 1e-8
    assert np.abs(st.phi_d - 2.5).max() <= 1e-8
    for snap in res.snapshots:
        assert np.abs(snap.phi - 2.5).max() <= 1e-8


def test_stationary_linear_field():
    assert stationary_linear_field(100) <= 1e-6


def test_linear_problem_takes_two_iterations(p1_small):
    mesh, binding, assets = p1_small
    cfg = SimulationConfig(FractionalScheme(CAPUTO, 0.5, 0.01), NonlinearParams(), binding, t_end=0.05)
    res = run_simulation(cfg, assets=assets)
    assert res.state.iterations == [2] * 5


def test_nonlinear_iterate_satisfies_discrete_equations(p1_small):
    mesh, binding, assets = p1_small
    params = NonlinearParams(3.0, 1.0, 1.0)
    scheme = FractionalScheme(CAPUTO, 0.5, 0.01)
    cfg = SimulationConfig(scheme, params, binding, t_end=0.1, tol_nl=1e-10)
    state = initial_state(cfg, assets)
    ns = mesh.n_quads
    worst = 0.0
    for _ in range(6):
        n = state.n
        c_time = time_coeff(scheme, n)
        P = np.asarray(history_term(scheme, state.ledger, n)).reshape(ns, 4)
        phi_n = state.phi_d.copy()
        cp = assets.dofmap.cell_points
        f = binding.source(cp[..., 0], cp[..., 1], (n + 1) * scheme.dt)
        advance_one_step(state, cfg, assets)
        r = discrete_residual(assets.blocks, params, c_time, state.phi_b, state.q_b, state.phi_d, phi_n, P, f)
        worst = max(worst, r / max(1.0, np.abs(state.phi_d).max()))
    assert max(state.iterations) > 2
    assert worst <= 10 * cfg.tol_nl


def test_non_convergence_raises(p1_small):
    mesh, binding, assets = p1_small
    cfg = SimulationConfig(FractionalScheme(CAPUTO, 0.5, 0.01), NonlinearParams(3.0, 1.0, 1.0), binding,
                           t_end=0.02, max_nl_iters=1)
    with pytest.raises(ConvergenceError, match="did not converge"):
        run_simulation(cfg, assets=assets)


def test_fractal_fractional_beta_one_matches_caputo(p1_small):
    mesh, binding, assets = p1_small
    params = NonlinearParams(3.0, 1.0, 1.0)
    runs = []
    for kind in (CAPUTO, FRACTAL_FRACTIONAL):
        cfg = SimulationConfig(FractionalScheme(kind, 0.7, 0.01, 1.0), params, binding, t_end=0.1)
        runs.append(run_simulation(cfg, assets=assets).state)
    assert np.abs(runs[0].phi_d - runs[1].phi_d).max() <= 1e-10
    assert np.abs(runs[0].phi_b - runs[1].phi_b).max() <= 1e-10


def test_runs_are_bit_identical(p1_small):
    mesh, binding, _ = p1_small
    cfg = SimulationConfig(FractionalScheme(CAPUTO, 0.6, 0.02), NonlinearParams(3.0, 1.0, 1.0), binding,
                           t_end=0.1, probes=[Probe("y=0.25", (0.0, 0.25), (1.0, 0.0))], snapshot_times=[0.04])
    a = run_simulation(cfg, mesh=mesh)
    b = run_simulation(cfg, mesh=mesh)
    assert np.array_equal(a.state.phi_b, b.state.phi_b)
    assert np.array_equal(a.state.q_b, b.state.q_b)
    assert [e.e_inf for e in a.errors] == [e.e_inf for e in b.errors]


def test_snapshots_and_probe_errors(p1_small):
    mesh, binding, assets = p1_small
    cfg = SimulationConfig(FractionalScheme(CAPUTO, 0.5, 0.01), NonlinearParams(3.0, 1.0, 1.0), binding,
                           t_end=0.1, probes=[Probe("y=0.25", (0.0, 0.25), (1.0, 0.0))],
                           snapshot_times=[0.0, 0.05, 0.1])
    res = run_simulation(cfg, assets=assets)
    assert [s.time for s in res.snapshots] == pytest.approx([0.0, 0.05, 0.1])
    assert [s.step for s in res.snapshots] == [0, 5, 10]
    assert [e.time for e in res.errors] == pytest.approx([0.05, 0.1])
    for e in res.errors:
        assert np.all(np.diff(e.s) >= 0)
        assert np.allclose(e.exact, binding.exact(e.points[:, 0], e.points[:, 1], e.time))
        assert e.e_inf < 0.05


def test_probe_selection(p1_small):
    mesh, _, assets = p1_small
    dm = assets.dofmap
    idx, s = probe_nodes(dm, assets.areas, Probe("y=0.25", (0.0, 0.25), (1.0, 0.0)))
    pts = np.concatenate([dm.boundary_points.reshape(-1, 2), dm.cell_points.reshape(-1, 2)])[idx]
    h = math.sqrt(assets.areas.max())
    assert np.all(np.abs(pts[:, 1] - 0.25) <= 0.5 * h + 1e-6)
    assert np.allclose(s, pts[:, 0])
    # whole-field probes count every coincident interface node once
    idx_all, _ = probe_nodes(dm, assets.areas, Probe("all"))
    assert idx_all.size == 12 * mesh.n_quads - 2 * len(dm.topology.pairs)
