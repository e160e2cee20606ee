"""Time-invariant H, G, C blocks of one quadrilateral subdomain.

Boundary unknowns are ordered edge by edge, two per edge (``2*e + b``); cell
unknowns follow ``kernels.CELL_NODE_SIGNS``. Row ``k`` of the ``*_b*`` blocks
collocates at boundary node ``k``; row ``j`` of the ``*_d*`` blocks at cell
node ``j``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernels import (
    CELL_NODE_SIGNS,
    DEFAULT_LAYOUT,
    DEFAULT_QUADRATURE,
    DiscontinuousLayout,
    QuadratureConfig,
    bilinear_map,
    integrate_cell,
    integrate_edge,
)

__all__ = [
    "SubdomainMatrices",
    "CollocationSet",
    "collocation_points",
    "boundary_local_coords",
    "assemble_subdomain",
    "assemble_all",
    "equipotential_residuals",
]


@dataclass
class SubdomainMatrices:
    """Blocks for one subdomain, or a stack of them along a leading axis.

    The boundary jump coefficient 0.5 is already on the diagonal of ``H_bb``;
    the unit cell coefficient stays implicit (it becomes the identity in
    ``I + S_dd`` during condensation).
    """

    H_bb: np.ndarray  # (..., 8, 8)
    G_bb: np.ndarray  # (..., 8, 8)
    C_bd: np.ndarray  # (..., 8, 4)
    H_db: np.ndarray  # (..., 4, 8)
    G_db: np.ndarray  # (..., 4, 8)
    C_dd: np.ndarray  # (..., 4, 4)

    def __getitem__(self, idx) -> "SubdomainMatrices":
        return SubdomainMatrices(*(getattr(self, f)[idx] for f in _FIELDS))

    @classmethod
    def stack(cls, items) -> "SubdomainMatrices":
        return cls(*(np.stack([getattr(m, f) for m in items]) for f in _FIELDS))


_FIELDS = ("H_bb", "G_bb", "C_bd", "H_db", "G_db", "C_dd")


@dataclass(frozen=True)
class CollocationSet:
    boundary: np.ndarray  # (8, 2)
    cell: np.ndarray  # (4, 2)


def boundary_local_coords(layout: DiscontinuousLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Parametric (xi, eta) of the 8 boundary nodes in the cell square."""
    c = layout.xi_c
    out = []
    for e in range(4):
        for s in (-c, c):
            out.append([(s, -1.0), (1.0, s), (-s, 1.0), (-1.0, -s)][e])
    return np.array(out)


def collocation_points(corners, layout: DiscontinuousLayout = DEFAULT_LAYOUT) -> CollocationSet:
    corners = np.asarray(corners, float)
    bl = boundary_local_coords(layout)
    cl = layout.xi_c * CELL_NODE_SIGNS
    return CollocationSet(
        boundary=bilinear_map(corners, bl[:, 0], bl[:, 1]),
        cell=bilinear_map(corners, cl[:, 0], cl[:, 1]),
    )


def assemble_subdomain(
    corners,
    layout: DiscontinuousLayout = DEFAULT_LAYOUT,
    qconfig: QuadratureConfig = DEFAULT_QUADRATURE,
) -> SubdomainMatrices:
    corners = np.asarray(corners, float)
    pts = collocation_points(corners, layout)
    local = np.vstack([boundary_local_coords(layout), layout.xi_c * CELL_NODE_SIGNS])
    colloc = np.vstack([pts.boundary, pts.cell])

    H = np.zeros((12, 8))
    G = np.zeros((12, 8))
    C = np.zeros((12, 4))
    for k, z in enumerate(colloc):
        for e in range(4):
            a, b = corners[e], corners[(e + 1) % 4]
            H[k, 2 * e: 2 * e + 2] = integrate_edge(z, a, b, "Q", layout, qconfig)
            G[k, 2 * e: 2 * e + 2] = integrate_edge(z, a, b, "G", layout, qconfig)
        C[k] = integrate_cell(z, corners, layout, qconfig, local=local[k])
    H[:8] += 0.5 * np.eye(8)
    return SubdomainMatrices(H[:8], G[:8], C[:8], H[8:], G[8:], C[8:])


def _canonical(corners: np.ndarray):
    """Translate corner 0 to the origin and rotate edge 0 onto +x.

    G and Q depend only on relative geometry, so congruent quads share blocks.
    """
    rel = corners - corners[0]
    d = rel[1]
    L = float(np.hypot(*d))
    c, s = d / L
    rot = np.array([[c, s], [-s, c]])
    canon = rel @ rot.T
    scale = max(float(np.abs(canon).max()), 1e-300)
    key = tuple(np.round(canon.ravel() / scale, 11).tolist()) + (round(scale, 11),)
    return key, canon


def assemble_all(
    mesh,
    layout: DiscontinuousLayout = DEFAULT_LAYOUT,
    qconfig: QuadratureConfig = DEFAULT_QUADRATURE,
    workers: int = 1,
    reuse_congruent: bool = True,
) -> SubdomainMatrices:
    """Stacked blocks for every quad of ``mesh``.

    Congruent quads (up to a rigid motion) are assembled once when
    ``reuse_congruent`` is set. Distinct shapes are independent and may be
    assembled on a thread pool.
    """
    corners = mesh.all_corners()
    if reuse_congruent:
        keys, shapes = [], {}
        for c in corners:
            key, canon = _canonical(c)
            keys.append(key)
            shapes.setdefault(key, canon)
    else:
        keys = list(range(len(corners)))
        shapes = dict(enumerate(corners))

    def work(key):
        return key, assemble_subdomain(shapes[key], layout, qconfig)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = dict(pool.map(work, list(shapes)))
    else:
        done = dict(map(work, list(shapes)))
    return SubdomainMatrices.stack([done[k] for k in keys])


def equipotential_residuals(blocks: SubdomainMatrices) -> np.ndarray:
    """Per-row residual of the constant-field identity, shape (..., 12).

    Boundary rows already carry their jump term; cell rows add the implicit
    unit coefficient.
    """
    rb = blocks.H_bb.sum(axis=-1)
    rd = 1.0 + blocks.H_db.sum(axis=-1)
    return np.concatenate([rb, rd], axis=-1)
