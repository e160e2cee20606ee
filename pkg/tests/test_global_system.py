import numpy as np
import pytest
import scipy.sparse as sps

from ldbem.condense import build_S_and_b, condense
from ldbem.global_system import (
    DIRICHLET,
    NEUMANN,
    BoundaryCondition,
    SingularSystemError,
    SparseSystem,
    assemble_global,
    build_dof_map,
    solve_sparse,
)
from ldbem.mesh import MeshError, generate_rectangle
from ldbem.subdomain import assemble_all

SIDES = ("left", "right", "bottom", "top")


def all_dirichlet(value=0.0):
    return {t: BoundaryCondition(DIRICHLET, value) for t in SIDES}


def mixed():
    return {
        "left": BoundaryCondition(DIRICHLET, 1.0),
        "right": BoundaryCondition(DIRICHLET, 0.0),
        "bottom": BoundaryCondition(NEUMANN, 0.0),
        "top": BoundaryCondition(NEUMANN, 0.0),
    }


def random_condensed(mesh, rng):
    blocks = assemble_all(mesh)
    ns = mesh.n_quads
    S_dd, S_bd, b_dd, b_bd = build_S_and_b(
        blocks, rng.uniform(-1, 1, (ns, 4)), 2.0, rng.standard_normal((ns, 4)), rng.standard_normal((ns, 4)),
        rng.standard_normal((ns, 4)), 1.0,
    )
    return blocks, S_dd, S_bd, b_dd, b_bd, condense(blocks, S_dd, S_bd, b_dd, b_bd)


def test_single_quad_all_dirichlet_counts():
    dm = build_dof_map(generate_rectangle(1, 1), all_dirichlet())
    assert dm.n_dofs == 8
    assert np.all(dm.q_col >= 0) and np.all(dm.phi_col < 0)


def test_two_by_one_counts():
    dm = build_dof_map(generate_rectangle(2, 1), all_dirichlet())
    assert dm.n_dofs == 16
    outer = np.array([[t is not None for t in row] for row in dm.node_tag])
    assert np.sum(dm.q_col[outer] >= 0) == 12
    assert np.sum(dm.phi_col[outer] >= 0) == 0
    shared_phi = np.unique(dm.phi_col[~outer])
    shared_q = np.unique(dm.q_col[~outer])
    assert shared_phi.size == 2 and shared_q.size == 2


def test_mixed_counts_on_two_by_two():
    mesh = generate_rectangle(2, 2)
    dm = build_dof_map(mesh, mixed())
    assert dm.n_dofs == 32
    tags = dm.node_tag
    for s in range(4):
        for j in range(8):
            t = tags[s, j]
            if t in ("left", "right"):
                assert dm.q_col[s, j] >= 0 and dm.phi_col[s, j] < 0
            elif t in ("bottom", "top"):
                assert dm.phi_col[s, j] >= 0 and dm.q_col[s, j] < 0
            else:
                assert dm.phi_col[s, j] >= 0 and dm.q_col[s, j] >= 0
    # 8 Dirichlet q + 8 Neumann phi + 8 interface pairs x 2
    assert np.unique(dm.phi_col[dm.phi_col >= 0]).size == 8 + 8
    assert np.unique(dm.q_col[dm.q_col >= 0]).size == 8 + 8
    # each interface dof appears twice with opposite flux signs
    for col in np.unique(dm.q_col[tags == None]):  # noqa: E711
        assert sorted(dm.q_sign[dm.q_col == col].tolist()) == [-1.0, 1.0]


def test_missing_boundary_condition():
    bcs = all_dirichlet()
    del bcs["top"]
    with pytest.raises(MeshError, match="top"):
        build_dof_map(generate_rectangle(2, 2), bcs)


def test_single_quad_rhs_is_bbar(rng):
    mesh = generate_rectangle(1, 1)
    dm = build_dof_map(mesh, all_dirichlet(0.0))
    *_, cond = random_condensed(mesh, rng)
    phi, q = dm.known_values(0.0)
    sys = assemble_global(cond, dm, phi, q)
    assert np.array_equal(sys.rhs, cond.bbar.ravel())


def test_row_nonzeros_bounded():
    mesh = generate_rectangle(4, 4)
    dm = build_dof_map(mesh, mixed())
    rng = np.random.default_rng(3)
    *_, cond = random_condensed(mesh, rng)
    A = assemble_global(cond, dm, *dm.known_values(0.0)).A.tocsr()
    assert A.shape == (128, 128)
    assert np.diff(A.indptr).max() <= 16


def monolithic(mesh, dm, blocks, S_dd, S_bd, b_dd, b_bd, t=0.0):
    """Dense solve of all subdomain equations plus explicit interface and boundary constraints."""
    ns = mesh.n_quads
    nv = 20 * ns  # phi_b(8), q_b(8), phi_d(4) per subdomain
    rows, rhs = [], []
    for s in range(ns):
        o = 20 * s
        for k in range(8):
            r = np.zeros(nv)
            r[o:o + 8], r[o + 8:o + 16], r[o + 16:o + 20] = blocks.H_bb[s, k], -blocks.G_bb[s, k], S_bd[s, k]
            rows.append(r)
            rhs.append(b_bd[s, k])
        for i in range(4):
            r = np.zeros(nv)
            r[o:o + 8], r[o + 8:o + 16] = blocks.H_db[s, i], -blocks.G_db[s, i]
            r[o + 16:o + 20] = np.eye(4)[i] + S_dd[s, i]
            rows.append(r)
            rhs.append(b_dd[s, i])
    phi_k, q_k = dm.known_values(t)
    for s in range(ns):
        for j in range(8):
            tag = dm.node_tag[s, j]
            if tag is None:
                continue
            r = np.zeros(nv)
            if dm.bcs[tag].kind == DIRICHLET:
                r[20 * s + j] = 1.0
                rhs.append(phi_k[s, j])
            else:
                r[20 * s + 8 + j] = 1.0
                rhs.append(q_k[s, j])
            rows.append(r)
    for p in dm.topology.pairs:
        for b in (0, 1):
            ja, jb = 2 * p.edge_a + b, 2 * p.edge_b + 1 - b
            r = np.zeros(nv)
            r[20 * p.quad_a + ja], r[20 * p.quad_b + jb] = 1.0, -1.0
            rows.append(r)
            rhs.append(0.0)
            r = np.zeros(nv)
            r[20 * p.quad_a + 8 + ja], r[20 * p.quad_b + 8 + jb] = 1.0, 1.0
            rows.append(r)
            rhs.append(0.0)
    z = np.linalg.solve(np.array(rows), np.array(rhs)).reshape(ns, 20)
    return z[:, :8], z[:, 8:16], z[:, 16:]


def test_monolithic_solution_satisfies_global_system(rng):
    mesh = generate_rectangle(2, 2)
    dm = build_dof_map(mesh, mixed())
    blocks, S_dd, S_bd, b_dd, b_bd, cond = random_condensed(mesh, rng)
    phi_b, q_b, _ = monolithic(mesh, dm, blocks, S_dd, S_bd, b_dd, b_bd)
    x = np.zeros(dm.n_dofs)
    has_phi, has_q = dm.phi_col >= 0, dm.q_col >= 0
    x[dm.phi_col[has_phi]] = phi_b[has_phi]
    x[dm.q_col[has_q]] = (dm.q_sign * q_b)[has_q]
    sys = assemble_global(cond, dm, *dm.known_values(0.0))
    assert np.abs(sys.A @ x - sys.rhs).max() <= 1e-10

    sol, report = solve_sparse(sys, dm)
    assert report.residual <= 1e-10 and report.warning is None
    assert np.abs(sol - x).max() <= 1e-10


def test_flux_equilibrium_and_continuity(rng):
    mesh = generate_rectangle(3, 2)
    dm = build_dof_map(mesh, mixed())
    *_, cond = random_condensed(mesh, rng)
    phi_k, q_k = dm.known_values(0.0)
    x, _ = solve_sparse(assemble_global(cond, dm, phi_k, q_k), dm)
    phi, q = dm.unpack(x, phi_k, q_k)
    for p in dm.topology.pairs:
        for b in (0, 1):
            ja, jb = 2 * p.edge_a + b, 2 * p.edge_b + 1 - b
            assert phi[p.quad_a, ja] == phi[p.quad_b, jb]
            assert q[p.quad_a, ja] + q[p.quad_b, jb] == 0.0


def test_solve_identity():
    b = np.arange(5.0)
    x, report = solve_sparse(SparseSystem(sps.identity(5, format="csc"), b))
    assert np.array_equal(x, b) and report.residual == 0.0


def test_solve_random_sparse_vs_dense(rng):
    A = sps.random(50, 50, density=0.1, random_state=11, format="csc") + 5 * sps.identity(50, format="csc")
    b = rng.standard_normal(50)
    x, report = solve_sparse(SparseSystem(A.tocsc(), b))
    assert np.abs(x - np.linalg.solve(A.toarray(), b)).max() <= 1e-10
    assert report.residual <= 1e-10


def test_singular_duplicate_row():
    A = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [1.0, 2.0, 0.0]])
    with pytest.raises(SingularSystemError, match="dof"):
        solve_sparse(SparseSystem(sps.csc_matrix(A), np.ones(3)))


def test_boundary_condition_kind_checked():
    with pytest.raises(ValueError):
        BoundaryCondition("robin", 1.0)
    bc = BoundaryCondition(DIRICHLET, lambda x, y, t: x + t)
    assert np.array_equal(bc.evaluate(np.array([1.0, 2.0]), np.zeros(2), 1.0), [2.0, 3.0])
