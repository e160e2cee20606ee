"""Global degrees of freedom, sparse assembly and direct solution.

Every local boundary node carries one global unknown: ``q`` on Dirichlet
edges, ``phi`` on Neumann edges, and on interfaces the two coincident nodes
share one ``phi`` and one ``q`` unknown. The flux unknown belongs to the
lower-numbered subdomain; its neighbour sees ``-q``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
from scipy import linalg
import scipy.sparse.linalg as spla

from .condense import CondensedBlock
from .kernels import DEFAULT_LAYOUT, DiscontinuousLayout
from .mesh import Mesh, MeshError, Topology, build_topology
from .subdomain import collocation_points

__all__ = [
    "DIRICHLET",
    "NEUMANN",
    "BoundaryCondition",
    "DofMap",
    "SparseSystem",
    "SolveReport",
    "SingularSystemError",
    "build_dof_map",
    "assemble_global",
    "solve_sparse",
]

log = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class BoundaryCondition:
    """Prescribed phi (Dirichlet) or q (Neumann) on one outer tag.

    ``value`` is a constant or a callable ``value(x, y, t)`` evaluated at the
    collocation points.
    """

    kind: str
    value: float | Callable = 0.0

    def __post_init__(self):
        if self.kind not in (DIRICHLET, NEUMANN):
            raise ValueError(f"boundary condition kind must be dirichlet or neumann, got {self.kind!r}")

    def evaluate(self, x, y, t):
        if callable(self.value):
            return np.broadcast_to(np.asarray(self.value(x, y, t), dtype=float), np.shape(x))
        return np.full(np.shape(x), float(self.value))


class SingularSystemError(ArithmeticError):
    pass


@dataclass
class DofMap:
    n_dofs: int
    phi_col: np.ndarray  # (Ns, 8) global column or -1
    q_col: np.ndarray  # (Ns, 8) global column or -1
    q_sign: np.ndarray  # (Ns, 8) +1 / -1
    node_tag: np.ndarray  # (Ns, 8) object: tag string or None for interfaces
    boundary_points: np.ndarray  # (Ns, 8, 2)
    cell_points: np.ndarray  # (Ns, 4, 2)
    bcs: dict[str, BoundaryCondition]
    topology: Topology
    _groups: dict = field(default_factory=dict, repr=False)

    @property
    def n_subdomains(self) -> int:
        return self.phi_col.shape[0]

    def describe_dof(self, col: int) -> str:
        hit = np.argwhere((self.phi_col == col) | (self.q_col == col))
        if not len(hit):
            return f"dof {col}"
        s, j = hit[0]
        what = "phi" if self.phi_col[s, j] == col else "q"
        x, y = self.boundary_points[s, j]
        return f"dof {col} ({what} at subdomain {s} node {j}, x={x:.6g}, y={y:.6g})"

    def known_values(self, t: float):
        """Prescribed (phi, q) arrays at time t; zero where the value is unknown."""
        phi = np.zeros(self.phi_col.shape)
        q = np.zeros(self.q_col.shape)
        for tag, (s, j) in self._groups.items():
            bc = self.bcs[tag]
            pts = self.boundary_points[s, j]
            vals = bc.evaluate(pts[:, 0], pts[:, 1], t)
            if bc.kind == DIRICHLET:
                phi[s, j] = vals
            else:
                q[s, j] = vals
        return phi, q

    def unpack(self, x, phi_known, q_known):
        """Full local (phi_b, q_b) from the global solution and prescribed data."""
        x = np.asarray(x)
        phi = np.where(self.phi_col >= 0, x[np.maximum(self.phi_col, 0)], phi_known)
        q = np.where(self.q_col >= 0, self.q_sign * x[np.maximum(self.q_col, 0)], q_known)
        return phi, q


def build_dof_map(
    mesh: Mesh,
    bcs: dict[str, BoundaryCondition],
    topology: Topology | None = None,
    layout: DiscontinuousLayout = DEFAULT_LAYOUT,
) -> DofMap:
    topology = build_topology(mesh) if topology is None else topology
    missing = [tag for tag in topology.outer if tag not in bcs]
    if missing:
        raise MeshError(f"no boundary condition for outer tag(s) {missing}")
    ns = mesh.n_quads
    corners = mesh.all_corners()
    bpts = np.empty((ns, 8, 2))
    cpts = np.empty((ns, 4, 2))
    for s in range(ns):
        cs = collocation_points(corners[s], layout)
        bpts[s], cpts[s] = cs.boundary, cs.cell

    phi_col = np.full((ns, 8), -1, dtype=np.int64)
    q_col = np.full((ns, 8), -1, dtype=np.int64)
    q_sign = np.ones((ns, 8))
    node_tag = np.full((ns, 8), None, dtype=object)
    tol = 1e-9 * max(mesh.diameter(), 1e-300)

    partner = {}
    for p in topology.pairs:
        for b in (0, 1):
            ja, jb = 2 * p.edge_a + b, 2 * p.edge_b + (1 - b)
            if np.hypot(*(bpts[p.quad_a, ja] - bpts[p.quad_b, jb])) > tol:
                raise MeshError(
                    f"interface collocation points of subdomains {p.quad_a}/{p.quad_b} do not coincide"
                )
            partner[(p.quad_a, ja)] = (p.quad_b, jb)

    groups: dict[str, tuple[list, list]] = {}
    n = 0
    for s in range(ns):
        for e in range(4):
            info = mesh.edge_kinds[s][e]
            for b in (0, 1):
                j = 2 * e + b
                if info.is_interface:
                    if (s, j) not in partner:
                        continue  # owned by the lower-numbered neighbour
                    s2, j2 = partner[(s, j)]
                    phi_col[s, j] = phi_col[s2, j2] = n
                    q_col[s, j] = q_col[s2, j2] = n + 1
                    q_sign[s2, j2] = -1.0
                    n += 2
                else:
                    bc = bcs[info.tag]
                    node_tag[s, j] = info.tag
                    gs, gj = groups.setdefault(info.tag, ([], []))
                    gs.append(s)
                    gj.append(j)
                    if bc.kind == DIRICHLET:
                        q_col[s, j] = n
                    else:
                        phi_col[s, j] = n
                    n += 1
    if n != 8 * ns:
        raise MeshError(f"unknown count {n} does not match equation count {8 * ns}")
    dm = DofMap(n, phi_col, q_col, q_sign, node_tag, bpts, cpts, dict(bcs), topology)
    dm._groups = {tag: (np.array(s), np.array(j)) for tag, (s, j) in groups.items()}
    return dm


@dataclass
class SparseSystem:
    A: sps.csc_matrix
    rhs: np.ndarray


@dataclass
class SolveReport:
    residual: float
    warning: str | None = None


def assemble_global(cond: CondensedBlock, dofmap: DofMap, phi_known, q_known) -> SparseSystem:
    """Stack the condensed rows ``Hbar phi - Gbar q = bbar`` into A x = rhs."""
    ns = dofmap.n_subdomains
    if cond.Hbar.shape != (ns, 8, 8) or cond.Gbar.shape != (ns, 8, 8):
        raise ValueError(f"condensed blocks have shape {cond.Hbar.shape}, expected {(ns, 8, 8)}")
    r8 = np.arange(8)

    sp, jp = np.nonzero(dofmap.phi_col >= 0)
    rows_p = 8 * sp[:, None] + r8[None, :]
    cols_p = np.broadcast_to(dofmap.phi_col[sp, jp][:, None], rows_p.shape)
    vals_p = cond.Hbar[sp, :, jp]

    sq, jq = np.nonzero(dofmap.q_col >= 0)
    rows_q = 8 * sq[:, None] + r8[None, :]
    cols_q = np.broadcast_to(dofmap.q_col[sq, jq][:, None], rows_q.shape)
    vals_q = -cond.Gbar[sq, :, jq] * dofmap.q_sign[sq, jq][:, None]

    rows = np.concatenate([rows_p.ravel(), rows_q.ravel()])
    cols = np.concatenate([cols_p.ravel(), cols_q.ravel()])
    vals = np.concatenate([vals_p.ravel(), vals_q.ravel()])
    A = sps.csc_matrix((vals, (rows, cols)), shape=(8 * ns, dofmap.n_dofs))

    pk = np.where(dofmap.phi_col >= 0, 0.0, phi_known)
    qk = np.where(dofmap.q_col >= 0, 0.0, q_known)
    rhs = (
        cond.bbar
        - np.einsum("sij,sj->si", cond.Hbar, pk)
        + np.einsum("sij,sj->si", cond.Gbar, qk)
    ).ravel()
    return SparseSystem(A, rhs)


def _dependent_column(A: sps.csc_matrix, dense_limit: int = 4000) -> int:
    """Column that column-pivoted QR orders last, i.e. the one most nearly dependent on the others."""
    if A.shape[1] > dense_limit:
        return int(np.argmin(np.abs(A).sum(axis=0)))
    _, _, piv = linalg.qr(A.toarray(), mode="economic", pivoting=True)
    return int(piv[-1])


def solve_sparse(system: SparseSystem, dofmap: DofMap | None = None, pivot_tol: float = 1e-13):
    """Direct sparse LU solve. Returns ``(x, SolveReport)``."""
    A = sps.csc_matrix(system.A)
    b = np.asarray(system.rhs, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"system matrix is not square: {A.shape}")

    def name(col):
        return dofmap.describe_dof(col) if dofmap is not None else f"dof {col}"

    counts = np.diff(A.indptr)
    if np.any(counts == 0):
        raise SingularSystemError(f"singular matrix: empty column, suspect {name(int(np.argmin(counts)))}")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(f"singular matrix ({exc}), suspect {name(_dependent_column(A))}") from exc
    diag = np.abs(lu.U.diagonal())
    k = int(np.argmin(diag))
    if diag[k] <= pivot_tol * max(diag.max(), 1e-300):
        raise SingularSystemError(f"singular matrix: vanishing pivot, suspect {name(int(lu.perm_c[k]))}")
    x = lu.solve(b)
    scale = max(np.abs(b).max(), 1e-300)
    res = float(np.abs(A @ x - b).max() / scale) if np.abs(b).max() > 0 else float(np.abs(A @ x).max())
    warning = None
    if res > 1e-6:
        warning = f"relative residual {res:.3e} exceeds 1e-6"
        log.warning(warning)
    return x, SolveReport(res, warning)
