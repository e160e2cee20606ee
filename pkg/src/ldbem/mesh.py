"""Conformal quadrilateral subdomain meshes.

A mesh is a list of nodes and a list of counter-clockwise quadrilaterals.
Local edge ``e`` of a quad runs from corner ``e`` to corner ``(e + 1) % 4``.
Every edge is either an outer edge carrying a string tag or an interface
shared with exactly one neighbouring quad.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "EdgeInfo",
    "InterfacePair",
    "Topology",
    "Mesh",
    "generate_rectangle",
    "generate_annulus",
    "generate_disk",
    "star_radius",
    "star_boundary",
    "import_mesh",
    "export_mesh",
    "build_topology",
    "quad_areas",
]

_GAUSS_2 = (-1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0))


class MeshError(ValueError):
    """Raised for malformed, non-conformal or inconsistently tagged meshes."""


@dataclass(frozen=True)
class EdgeInfo:
    """Kind of one local edge: an outer edge with a tag, or an interface."""

    kind: str  # "outer" | "interface"
    tag: str | None = None
    neighbor: int | None = None
    neighbor_edge: int | None = None

    @property
    def is_interface(self) -> bool:
        return self.kind == "interface"


@dataclass(frozen=True)
class InterfacePair:
    quad_a: int
    edge_a: int
    quad_b: int
    edge_b: int


@dataclass(frozen=True)
class Topology:
    pairs: tuple[InterfacePair, ...]
    outer: dict[str, tuple[tuple[int, int], ...]]


@dataclass
class Mesh:
    """Nodes, counter-clockwise quads and per-edge kinds.

    ``edge_kinds[q][e]`` is the :class:`EdgeInfo` of local edge ``e`` of quad
    ``q``. Construct through :meth:`from_tags`, which pairs interfaces and
    validates the result.
    """

    nodes: np.ndarray
    quads: np.ndarray
    edge_kinds: list[list[EdgeInfo]] = field(repr=False)

    @classmethod
    def from_tags(cls, nodes, quads, tags: dict[tuple[int, int], str]) -> "Mesh":
        nodes = np.ascontiguousarray(nodes, dtype=float).reshape(-1, 2)
        quads = np.ascontiguousarray(quads, dtype=np.int64).reshape(-1, 4)
        _check_nodes_and_quads(nodes, quads)
        kinds = _pair_edges(nodes, quads, tags)
        mesh = cls(nodes=nodes, quads=quads, edge_kinds=kinds)
        mesh.validate()
        return mesh

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    @property
    def tags(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.edge_kinds:
            for info in row:
                if not info.is_interface:
                    seen.setdefault(info.tag, None)
        return list(seen)

    def corners(self, q: int) -> np.ndarray:
        return self.nodes[self.quads[q]]

    def all_corners(self) -> np.ndarray:
        """(n_quads, 4, 2) array of corner coordinates."""
        return self.nodes[self.quads]

    def diameter(self) -> float:
        span = self.nodes.max(axis=0) - self.nodes.min(axis=0)
        return float(np.hypot(*span))

    def outer_tags(self) -> dict[tuple[int, int], str]:
        return {
            (q, e): info.tag
            for q, row in enumerate(self.edge_kinds)
            for e, info in enumerate(row)
            if not info.is_interface
        }

    def validate(self) -> None:
        """Check orientation, Jacobian positivity and interface symmetry."""
        jac = _gauss_jacobians(self.all_corners())
        bad = np.nonzero(jac.min(axis=1) <= 0.0)[0]
        if len(bad):
            raise MeshError(
                f"quad {int(bad[0])} has a non-positive Jacobian "
                "(clockwise or self-intersecting corners)"
            )
        for q, row in enumerate(self.edge_kinds):
            for e, info in enumerate(row):
                if info.is_interface:
                    back = self.edge_kinds[info.neighbor][info.neighbor_edge]
                    if not back.is_interface or back.neighbor != q or back.neighbor_edge != e:
                        raise MeshError(f"asymmetric interface at quad {q} edge {e}")
                elif not info.tag:
                    raise MeshError(f"outer edge {e} of quad {q} has no tag")


def _check_nodes_and_quads(nodes: np.ndarray, quads: np.ndarray) -> None:
    if not np.all(np.isfinite(nodes)):
        raise MeshError("node coordinates must be finite")
    n = len(nodes)
    for q, row in enumerate(quads):
        if row.min() < 0 or row.max() >= n:
            missing = [int(i) for i in row if i < 0 or i >= n]
            raise MeshError(f"quad {q} references missing node(s) {missing}")
        if len(set(row.tolist())) != 4:
            raise MeshError(f"quad {q} repeats a corner node")
    used = np.zeros(n, dtype=bool)
    used[quads.ravel()] = True
    if not used.all():
        raise MeshError(f"dangling node {int(np.nonzero(~used)[0][0])}")


def _gauss_jacobians(corners: np.ndarray) -> np.ndarray:
    """Bilinear-map Jacobian determinants at the 2x2 Gauss points, (n, 4)."""
    out = []
    for eta in _GAUSS_2:
        for xi in _GAUSS_2:
            dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
            deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
            a = np.einsum("k,nkd->nd", dxi, corners)
            b = np.einsum("k,nkd->nd", deta, corners)
            out.append(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    return np.stack(out, axis=1)


def quad_areas(corners: np.ndarray) -> np.ndarray:
    """Bilinear-map areas by 2x2 Gauss quadrature (exact for bilinear maps)."""
    return _gauss_jacobians(np.asarray(corners).reshape(-1, 4, 2)).sum(axis=1)


def _pair_edges(nodes, quads, tags):
    nq = len(quads)
    owners: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for q in range(nq):
        for e in range(4):
            a, b = int(quads[q, e]), int(quads[q, (e + 1) % 4])
            owners.setdefault((min(a, b), max(a, b)), []).append((q, e))

    kinds: list[list[EdgeInfo | None]] = [[None] * 4 for _ in range(nq)]
    for key, users in owners.items():
        if len(users) > 2:
            raise MeshError(f"edge {key} is shared by {len(users)} quads")
        if len(users) == 2:
            (qa, ea), (qb, eb) = users
            if (qa, ea) in tags or (qb, eb) in tags:
                raise MeshError(f"interior edge {key} carries an outer tag")
            if quads[qa, ea] != quads[qb, (eb + 1) % 4]:
                raise MeshError(
                    f"quads {qa} and {qb} traverse their shared edge in the same direction"
                )
            kinds[qa][ea] = EdgeInfo("interface", neighbor=qb, neighbor_edge=eb)
            kinds[qb][eb] = EdgeInfo("interface", neighbor=qa, neighbor_edge=ea)

    # Untagged single-owner edges may still be geometric interfaces across
    # duplicated nodes; match them by coincident end points.
    loose = [(q, e) for q in range(nq) for e in range(4) if kinds[q][e] is None and (q, e) not in tags]
    if loose:
        tol = 1e-9 * max(float(np.hypot(*(nodes.max(0) - nodes.min(0)))), 1e-300)
        for i, (qa, ea) in enumerate(loose):
            if kinds[qa][ea] is not None:
                continue
            pa0, pa1 = nodes[quads[qa, ea]], nodes[quads[qa, (ea + 1) % 4]]
            for qb, eb in loose[i + 1:]:
                if kinds[qb][eb] is not None or qb == qa:
                    continue
                pb0, pb1 = nodes[quads[qb, eb]], nodes[quads[qb, (eb + 1) % 4]]
                if np.linalg.norm(pa0 - pb1) <= tol and np.linalg.norm(pa1 - pb0) <= tol:
                    kinds[qa][ea] = EdgeInfo("interface", neighbor=qb, neighbor_edge=eb)
                    kinds[qb][eb] = EdgeInfo("interface", neighbor=qa, neighbor_edge=ea)
                    break

    for q in range(nq):
        for e in range(4):
            if kinds[q][e] is None:
                tag = tags.get((q, e))
                if not tag:
                    raise MeshError(f"untagged outer edge: quad {q}, local edge {e}")
                kinds[q][e] = EdgeInfo("outer", tag=tag)
    return kinds


def build_topology(mesh: Mesh) -> Topology:
    """Interface pair table plus outer edges grouped by tag.

    Each interior edge appears once, as (lower quad, its edge, higher quad,
    its edge). Corner coincidence is re-checked geometrically.
    """
    tol = 1e-9 * max(mesh.diameter(), 1e-300)
    pairs = []
    outer: dict[str, list[tuple[int, int]]] = {}
    for q, row in enumerate(mesh.edge_kinds):
        for e, info in enumerate(row):
            if not info.is_interface:
                outer.setdefault(info.tag, []).append((q, e))
                continue
            if info.neighbor < q:
                continue
            qb, eb = info.neighbor, info.neighbor_edge
            a0, a1 = mesh.nodes[mesh.quads[q, e]], mesh.nodes[mesh.quads[q, (e + 1) % 4]]
            b0, b1 = mesh.nodes[mesh.quads[qb, eb]], mesh.nodes[mesh.quads[qb, (eb + 1) % 4]]
            if np.linalg.norm(a0 - b1) > tol or np.linalg.norm(a1 - b0) > tol:
                raise MeshError(f"interface corners of quads {q}/{qb} do not coincide")
            pairs.append(InterfacePair(q, e, qb, eb))
    return Topology(tuple(pairs), {k: tuple(v) for k, v in outer.items()})


# --------------------------------------------------------------------------
# generators


def generate_rectangle(nx: int, ny: int, x_range=(0.0, 1.0), y_range=(0.0, 1.0)) -> Mesh:
    """Uniform nx-by-ny grid, outer edges tagged left/right/bottom/top."""
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be >= 1")
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate range {x_range} x {y_range}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    quads, tags = [], {}
    for j in range(ny):
        for i in range(nx):
            q = len(quads)
            quads.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
            if j == 0:
                tags[(q, 0)] = "bottom"
            if i == nx - 1:
                tags[(q, 1)] = "right"
            if j == ny - 1:
                tags[(q, 2)] = "top"
            if i == 0:
                tags[(q, 3)] = "left"
    return Mesh.from_tags(nodes, quads, tags)


def _ring_quads(n_layers: int, n_around: int, node_id):
    """Quads of a periodic (layer, angular index) structured band."""
    quads = []
    for i in range(n_layers):
        for j in range(n_around):
            jn = (j + 1) % n_around
            quads.append([node_id(i, j), node_id(i + 1, j), node_id(i + 1, jn), node_id(i, jn)])
    return quads


def generate_annulus(nr: int, ntheta: int, r_in: float, r_out: float, center=(0.0, 0.0)) -> Mesh:
    """Structured polar mesh, periodic in theta, tags "inner" and "outer"."""
    if not (0.0 < r_in < r_out):
        raise MeshError(f"invalid radii r_in={r_in}, r_out={r_out}")
    if nr < 1 or ntheta < 3:
        raise MeshError("need nr >= 1 and ntheta >= 3")
    radii = np.linspace(r_in, r_out, nr + 1)
    theta = 2.0 * np.pi * np.arange(ntheta) / ntheta
    R, T = np.meshgrid(radii, theta, indexing="ij")
    nodes = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]) + np.asarray(center)
    quads = _ring_quads(nr, ntheta, lambda i, j: i * ntheta + j)
    tags = {}
    for q in range(len(quads)):
        i = q // ntheta
        if i == 0:
            tags[(q, 3)] = "inner"
        if i == nr - 1:
            tags[(q, 1)] = "outer"
    return Mesh.from_tags(nodes, quads, tags)


def generate_disk(n_core: int, n_ring: int, radius: float, core_fraction: float = 0.4) -> Mesh:
    """Butterfly (O-grid) disk: a square core block and four transition blocks.

    The core square has half-width ``core_fraction * radius``; the transition
    layers interpolate linearly from the square perimeter to the rim, whose
    nodes are spaced uniformly in angle. Single outer tag "rim".
    """
    if n_core < 1 or n_ring < 1:
        raise MeshError("n_core and n_ring must be >= 1")
    if radius <= 0:
        raise MeshError("radius must be positive")
    a = core_fraction * radius
    s = np.linspace(-a, a, n_core + 1)
    X, Y = np.meshgrid(s, s)
    core_nodes = np.column_stack([X.ravel(), Y.ravel()])

    def cid(i, j):
        return j * (n_core + 1) + i

    # counter-clockwise perimeter of the core grid, starting at (a, -a)
    n = n_core
    perim = (
        [cid(n, j) for j in range(n)]
        + [cid(n - i, n) for i in range(n)]
        + [cid(0, n - j) for j in range(n)]
        + [cid(i, 0) for i in range(n)]
    )
    n_around = 4 * n
    # rim angle for perimeter point m: uniform from -pi/4
    ang = -0.25 * np.pi + 2.0 * np.pi * np.arange(n_around) / n_around
    rim = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    inner = core_nodes[perim]

    nodes = [core_nodes]
    offset = len(core_nodes)
    for k in range(1, n_ring + 1):
        w = k / n_ring
        layer = rim if k == n_ring else (1.0 - w) * inner + w * rim
        nodes.append(layer)
    nodes = np.vstack(nodes)

    def rid(k, m):
        return perim[m] if k == 0 else offset + (k - 1) * n_around + m

    quads = [[cid(i, j), cid(i + 1, j), cid(i + 1, j + 1), cid(i, j + 1)] for j in range(n) for i in range(n)]
    base = len(quads)
    quads += _ring_quads(n_ring, n_around, rid)
    tags = {}
    for q in range(base, len(quads)):
        if (q - base) // n_around == n_ring - 1:
            tags[(q, 1)] = "rim"
    return Mesh.from_tags(nodes, quads, tags)


def star_radius(theta, R: float = 0.4):
    """Radius of the star-shaped boundary at polar angle ``theta``."""
    th = np.asarray(theta, dtype=float)
    return R * (
        1.0
        + 0.2 * np.cos(3 * th)
        + 0.02 * np.cos(5 * th)
        + 0.4 * np.sin(8 * th)
        + 0.4 * np.sin(4 * th)
        + 0.1 * np.sin(15 * th)
    )


def star_boundary(n_points: int = 200, R: float = 0.4) -> np.ndarray:
    """Boundary points at theta_j = 2*pi*j/n_points, shape (n_points, 2)."""
    if n_points < 3:
        raise MeshError("n_points must be >= 3")
    th = 2.0 * np.pi * np.arange(n_points) / n_points
    r = star_radius(th, R)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


# --------------------------------------------------------------------------
# text format

_HEADER = "ldbem-mesh 1"


def export_mesh(mesh: Mesh) -> str:
    lines = [_HEADER, f"nodes {len(mesh.nodes)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"quads {len(mesh.quads)}")
    lines += [" ".join(str(i) for i in row) for row in mesh.quads.tolist()]
    tags = mesh.outer_tags()
    lines.append(f"tags {len(tags)}")
    lines += [f"{q} {e} {tag}" for (q, e), tag in tags.items()]
    return "\n".join(lines) + "\n"


def import_mesh(text: str) -> Mesh:
    """Parse the line-oriented mesh format; errors carry the line number."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            rows.append((lineno, body.split()))
    it = iter(rows)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file while reading {what}") from None

    def section(name):
        lineno, tok = take(f"'{name}' header")
        if len(tok) != 2 or tok[0] != name:
            raise MeshError(f"line {lineno}: expected '{name} <count>'")
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshError(f"line {lineno}: bad count {tok[1]!r}") from None
        if count < 0:
            raise MeshError(f"line {lineno}: negative count")
        return count

    lineno, tok = take("header")
    if " ".join(tok) != _HEADER:
        raise MeshError(f"line {lineno}: expected header '{_HEADER}'")

    nodes = []
    for _ in range(section("nodes")):
        lineno, tok = take("node")
        try:
            if len(tok) != 2:
                raise ValueError
            nodes.append((float(tok[0]), float(tok[1])))
        except ValueError:
            raise MeshError(f"line {lineno}: expected '<x> <y>'") from None

    quads = []
    for _ in range(section("quads")):
        lineno, tok = take("quad")
        try:
            if len(tok) != 4:
                raise ValueError
            quads.append([int(t) for t in tok])
        except ValueError:
            raise MeshError(f"line {lineno}: expected four node indices") from None

    tags = {}
    for _ in range(section("tags")):
        lineno, tok = take("tag")
        try:
            if len(tok) != 3:
                raise ValueError
            q, e = int(tok[0]), int(tok[1])
        except ValueError:
            raise MeshError(f"line {lineno}: expected '<quad> <edge> <tag>'") from None
        if not (0 <= q < len(quads)) or not (0 <= e < 4):
            raise MeshError(f"line {lineno}: tag refers to missing quad/edge {q}/{e}")
        tags[(q, e)] = tok[2]

    extra = next(it, None)
    if extra is not None:
        raise MeshError(f"line {extra[0]}: unexpected trailing content")
    return Mesh.from_tags(np.array(nodes, dtype=float).reshape(-1, 2), np.array(quads, dtype=np.int64).reshape(-1, 4), tags)
