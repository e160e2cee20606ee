"""Laplace fundamental solution, discontinuous shape functions and quadrature.

Conventions: ``G(r, r') = -ln|r - r'| / (2 pi)`` and
``Q(r, r') = n' . grad_{r'} G``. Edge integrals are over straight segments
with the outward normal of a counter-clockwise boundary, i.e. the tangent
rotated clockwise.

Quadrature strategy
-------------------
* far field: tensor / line Gauss-Legendre of ``regular_order``;
* near field: Gauss-Legendre of ``near_singular_order`` on pieces that are
  graded towards the (complex) location of the kernel singularity;
* collocation point on the edge: closed-form antiderivatives of ``ln``;
* collocation point inside or on a cell: the parametric square is split into
  triangles apexed at the point. In Duffy coordinates ``(u, v)`` the
  logarithm separates as ``ln u + ln(r/u)``; the first part is integrated by
  a product rule exact for polynomial ``N * J`` (degree <= 3 in ``u``), the
  second, smooth, by Gauss-Legendre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "QuadratureConfig",
    "DiscontinuousLayout",
    "KernelError",
    "green_G",
    "green_Q",
    "edge_shape",
    "cell_shape",
    "bilinear_map",
    "bilinear_jacobian",
    "inverse_bilinear",
    "integrate_edge",
    "integrate_cell",
    "CELL_NODE_SIGNS",
]

INV_2PI = 1.0 / (2.0 * math.pi)

# cell nodes, counter-clockwise from (-,-)
CELL_NODE_SIGNS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    regular_order: int = 8
    near_singular_order: int = 16
    near_field_ratio: float = 2.0
    singular_subdivisions: int = 4
    singular_order: int = 8

    def __post_init__(self):
        if min(self.regular_order, self.near_singular_order, self.singular_order) < 2:
            raise ValueError("quadrature orders must be >= 2")
        if self.near_field_ratio <= 0:
            raise ValueError("near_field_ratio must be positive")
        if self.singular_subdivisions < 1:
            raise ValueError("singular_subdivisions must be >= 1")


@dataclass(frozen=True)
class DiscontinuousLayout:
    """Boundary nodes sit at local +-xi_c, cell nodes at (+-xi_c, +-xi_c).

    The default 1/sqrt(3) puts the nodes at the 2-point Gauss abscissae, where
    the linear (bilinear on cells) interpolation error of a smooth field has
    zero mean over the element.
    """

    xi_c: float = 1.0 / math.sqrt(3.0)

    def __post_init__(self):
        if not (0.0 < self.xi_c < 1.0):
            raise ValueError(f"xi_c must lie in (0, 1), got {self.xi_c}")


DEFAULT_LAYOUT = DiscontinuousLayout()
DEFAULT_QUADRATURE = QuadratureConfig()


# --------------------------------------------------------------------------
# kernels and shape functions


def green_G(r, rp) -> float:
    d = np.asarray(rp, dtype=float) - np.asarray(r, dtype=float)
    dist = math.hypot(d[0], d[1])
    if dist == 0.0:
        raise KernelError("G is singular for coincident points")
    return -math.log(dist) * INV_2PI


def green_Q(r, rp, normal) -> float:
    d = np.asarray(rp, dtype=float) - np.asarray(r, dtype=float)
    r2 = d[0] * d[0] + d[1] * d[1]
    if r2 == 0.0:
        raise KernelError("Q is singular for coincident points")
    return -INV_2PI * (normal[0] * d[0] + normal[1] * d[1]) / r2


def edge_shape(xi, layout: DiscontinuousLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Linear discontinuous shape functions, last axis (N1, N2)."""
    xi = np.asarray(xi, dtype=float)
    c = layout.xi_c
    return np.stack([(c - xi) / (2.0 * c), (c + xi) / (2.0 * c)], axis=-1)


def cell_shape(xi, eta, layout: DiscontinuousLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Tensor-product cell shape functions, last axis ordered like CELL_NODE_SIGNS."""
    a = edge_shape(xi, layout)
    b = edge_shape(eta, layout)
    return np.stack(
        [a[..., 0] * b[..., 0], a[..., 1] * b[..., 0], a[..., 1] * b[..., 1], a[..., 0] * b[..., 1]],
        axis=-1,
    )


def _corner_shape(xi, eta):
    return 0.25 * np.stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)],
        axis=-1,
    )


def bilinear_map(corners, xi, eta) -> np.ndarray:
    return _corner_shape(np.asarray(xi, float), np.asarray(eta, float)) @ np.asarray(corners, float)


def bilinear_jacobian(corners, xi, eta):
    """Returns (dx/dxi, dx/deta) as arrays with a trailing axis of length 2."""
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    c = np.asarray(corners, float)
    dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    deta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return dxi @ c, deta @ c


def _jac_det(corners, xi, eta):
    a, b = bilinear_jacobian(corners, xi, eta)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def inverse_bilinear(corners, point, tol: float = 1e-14, max_iter: int = 60) -> np.ndarray:
    """Newton inversion of the bilinear map; returns (xi, eta)."""
    p = np.asarray(point, float)
    s = np.zeros(2)
    scale = float(np.ptp(np.asarray(corners), axis=0).max())
    for _ in range(max_iter):
        res = bilinear_map(corners, s[0], s[1]) - p
        a, b = bilinear_jacobian(corners, s[0], s[1])
        J = np.column_stack([a, b])
        step = np.linalg.solve(J, res)
        s = s - step
        if np.abs(step).max() < tol and np.hypot(*res) <= 1e-13 * scale:
            break
        if np.abs(s).max() > 1e6:
            break
    return s


# --------------------------------------------------------------------------
# one-dimensional rules


@lru_cache(maxsize=None)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=None)
def _gauss01(n: int):
    x, w = _gauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _log_product_weights(n: int) -> np.ndarray:
    """Weights w_j with sum w_j p(u_j) = int_0^1 u ln(u) p(u) du for deg p < n.

    Nodes are the Gauss-Legendre nodes on [0, 1]; the moment system is
    solved in extended precision to keep the weights at full accuracy.
    """
    import mpmath

    u, _ = _gauss01(n)
    with mpmath.workdps(50):
        V = mpmath.matrix(n, n)
        m = mpmath.matrix(n, 1)
        for k in range(n):
            m[k] = -mpmath.mpf(1) / (k + 2) ** 2
            for j in range(n):
                V[k, j] = mpmath.mpf(float(u[j])) ** k
        w = mpmath.lu_solve(V, m)
        return np.array([float(w[j]) for j in range(n)])


def _graded_pieces(lo: float, hi: float, center: complex, n_start: int = 1, ratio: float = 0.5, max_depth: int = 60):
    """Split [lo, hi] until every piece is shorter than ratio * its distance to ``center``."""
    edges = np.linspace(lo, hi, n_start + 1)
    stack = [(edges[i], edges[i + 1], 0) for i in range(n_start)][::-1]
    out = []
    cr, ci = center.real, abs(center.imag)
    while stack:
        a, b, depth = stack.pop()
        nearest = min(max(cr, a), b)
        dist = math.hypot(cr - nearest, ci)
        if (b - a) <= ratio * dist or depth >= max_depth:
            out.append((a, b))
        else:
            m = 0.5 * (a + b)
            stack.append((m, b, depth + 1))
            stack.append((a, m, depth + 1))
    return out


def _composite_rule(pieces, n: int):
    x, w = _gauss(n)
    xs, ws = [], []
    for a, b in pieces:
        h = 0.5 * (b - a)
        xs.append(a + h * (x + 1.0))
        ws.append(h * w)
    return np.concatenate(xs), np.concatenate(ws)


# --------------------------------------------------------------------------
# edge integrals


def _edge_frame(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = b - a
    L = math.hypot(d[0], d[1])
    if L == 0.0:
        raise KernelError("zero-length edge")
    t = d / L
    n = np.array([t[1], -t[0]])
    return a, b, L, t, n


def _edge_on_line(z, a, L, t, n, layout):
    """Closed-form G integral when z lies on the edge (local xi0 in [-1, 1])."""
    s0 = float(np.dot(z - a, t))
    xi0 = 2.0 * s0 / L - 1.0
    half = 0.5 * L
    lo, hi = -1.0 - xi0, 1.0 - xi0

    def f0(u):
        return 0.0 if u == 0.0 else u * math.log(abs(u)) - u

    def f1(u):
        return 0.0 if u == 0.0 else 0.5 * u * u * math.log(abs(u)) - 0.25 * u * u

    i0 = f0(hi) - f0(lo) + math.log(half) * (hi - lo)
    i1 = f1(hi) - f1(lo) + math.log(half) * 0.5 * (hi * hi - lo * lo)
    c = layout.xi_c
    out = np.empty(2)
    # N = alpha + beta * xi = (alpha + beta * xi0) + beta * u
    for k, (al, be) in enumerate(((0.5, -0.5 / c), (0.5, 0.5 / c))):
        out[k] = -INV_2PI * half * ((al + be * xi0) * i0 + be * i1)
    return out


def _segment_distance(z, a, b):
    d = b - a
    s = np.clip(np.dot(z - a, d) / np.dot(d, d), 0.0, 1.0)
    return float(np.hypot(*(a + s * d - z)))


def integrate_edge(
    z,
    a,
    b,
    kernel: str,
    layout: DiscontinuousLayout = DEFAULT_LAYOUT,
    config: QuadratureConfig = DEFAULT_QUADRATURE,
) -> np.ndarray:
    """Integrals of ``kernel`` ("G" or "Q") times N1, N2 over the edge a -> b.

    Returns the two node contributions, already multiplied by the length
    Jacobian.
    """
    if kernel not in ("G", "Q"):
        raise ValueError(f"kernel must be 'G' or 'Q', got {kernel!r}")
    z = np.asarray(z, float)
    a, b, L, t, n = _edge_frame(a, b)
    h = float(np.dot(z - a, n))
    s0 = float(np.dot(z - a, t))
    on_line = abs(h) <= 1e-13 * L
    if on_line and -1e-13 * L <= s0 <= L * (1 + 1e-13):
        if kernel == "Q":
            return np.zeros(2)
        return _edge_on_line(z, a, L, t, n, layout)

    dist = _segment_distance(z, a, b)
    if dist > config.near_field_ratio * L:
        xi, w = _gauss(config.regular_order)
    else:
        center = complex(2.0 * s0 / L - 1.0, 2.0 * abs(h) / L)
        xi, w = _composite_rule(_graded_pieces(-1.0, 1.0, center), config.near_singular_order)
    pts = a[None, :] + (0.5 * (xi + 1.0))[:, None] * (b - a)[None, :]
    d = pts - z[None, :]
    r2 = d[:, 0] ** 2 + d[:, 1] ** 2
    if kernel == "G":
        k = -0.5 * INV_2PI * np.log(r2)
    else:
        k = -INV_2PI * (d @ n) / r2
    return (0.5 * L) * ((w * k) @ edge_shape(xi, layout))


# --------------------------------------------------------------------------
# cell integrals


def _cell_regular(z, corners, layout, n, box=(-1.0, 1.0, -1.0, 1.0)):
    x, w = _gauss(n)
    x0, x1, y0, y1 = box
    hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    XI, ETA = np.meshgrid(x0 + hx * (x + 1.0), y0 + hy * (x + 1.0), indexing="ij")
    W = np.outer(w, w) * hx * hy
    pts = bilinear_map(corners, XI, ETA)
    d = pts - z
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    g = -0.5 * INV_2PI * np.log(r2)
    J = _jac_det(corners, XI, ETA)
    N = cell_shape(XI, ETA, layout)
    return np.einsum("ij,ijk->k", W * g * J, N)


def _cell_near(z, corners, layout, config, box=(-1.0, 1.0, -1.0, 1.0), depth=0):
    x0, x1, y0, y1 = box
    sub = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    pts = bilinear_map(corners, sub[:, 0], sub[:, 1])
    size = max(np.hypot(*(pts[2] - pts[0])), np.hypot(*(pts[3] - pts[1])))
    dist = min(_segment_distance(z, pts[i], pts[(i + 1) % 4]) for i in range(4))
    if size <= 0.5 * dist or depth >= 30:
        return _cell_regular(z, corners, layout, config.near_singular_order, box)
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    total = np.zeros(4)
    for b in ((x0, xm, y0, ym), (xm, x1, y0, ym), (xm, x1, ym, y1), (x0, xm, ym, y1)):
        total += _cell_near(z, corners, layout, config, b, depth + 1)
    return total


def _duffy_triangle(z, corners, apex, P, Q, layout, config):
    """int over the parametric triangle (apex, P, Q) of G(z, x) N J."""
    area2 = abs((P[0] - apex[0]) * (Q[1] - P[1]) - (P[1] - apex[1]) * (Q[0] - P[0]))
    if area2 <= 1e-14:
        return np.zeros(4)
    # complex location of the near-singularity of ln|J0 d(v)| along the base
    a, b = bilinear_jacobian(corners, apex[0], apex[1])
    J0 = np.column_stack([a, b])
    A = J0 @ (P - apex)
    B = J0 @ (Q - P)
    bb = float(B @ B)
    center = complex(-float(A @ B) / bb, abs(A[0] * B[1] - A[1] * B[0]) / bb)
    v, wv = _composite_rule(
        _graded_pieces(0.0, 1.0, center, n_start=config.singular_subdivisions),
        config.singular_order,
    )
    n = config.singular_order
    u, wu = _gauss01(n)
    wlog = _log_product_weights(n)

    d = (P - apex)[None, :] + v[:, None] * (Q - P)[None, :]  # (nv, 2)
    XI = apex[0] + u[:, None] * d[None, :, 0]
    ETA = apex[1] + u[:, None] * d[None, :, 1]
    pts = bilinear_map(corners, XI, ETA)
    dz = pts - z
    rt = np.hypot(dz[..., 0], dz[..., 1]) / u[:, None]
    J = _jac_det(corners, XI, ETA)
    N = cell_shape(XI, ETA, layout)
    radial = wlog[:, None] + (wu * u)[:, None] * np.log(rt)  # (nu, nv)
    return -INV_2PI * area2 * np.einsum("ij,j,ij,ijk->k", radial, wv, J, N)


def integrate_cell(
    z,
    corners,
    layout: DiscontinuousLayout = DEFAULT_LAYOUT,
    config: QuadratureConfig = DEFAULT_QUADRATURE,
    local=None,
) -> np.ndarray:
    """Integrals of G(z, x) times the four cell shape functions over the quad.

    ``local`` optionally gives the parametric coordinates of ``z`` when it is
    known to lie in the closed cell (saves a Newton inversion).
    """
    z = np.asarray(z, float)
    corners = np.asarray(corners, float)
    if np.min(_jac_det(corners, CELL_NODE_SIGNS[:, 0] / math.sqrt(3), CELL_NODE_SIGNS[:, 1] / math.sqrt(3))) <= 0:
        raise KernelError("degenerate or inverted cell Jacobian")
    diam = max(np.hypot(*(corners[2] - corners[0])), np.hypot(*(corners[3] - corners[1])))
    if local is None:
        dist = min(_segment_distance(z, corners[i], corners[(i + 1) % 4]) for i in range(4))
        inside = _point_in_quad(z, corners)
        if not inside and dist > config.near_field_ratio * diam:
            return _cell_regular(z, corners, layout, config.regular_order)
        if not inside and dist > 1e-12 * diam:
            return _cell_near(z, corners, layout, config)
        local = inverse_bilinear(corners, z)
    s = np.clip(np.asarray(local, float), -1.0, 1.0)
    square = CELL_NODE_SIGNS
    total = np.zeros(4)
    for i in range(4):
        total += _duffy_triangle(z, corners, s, square[i], square[(i + 1) % 4], layout, config)
    return total


def _point_in_quad(z, corners) -> bool:
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        if (b[0] - a[0]) * (z[1] - a[1]) - (b[1] - a[1]) * (z[0] - a[0]) < 0:
            return False
    return True
