"""Registry of the benchmark problems: geometry, boundary data, sources, defaults."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .driver import ProblemBinding, Probe
from .global_system import DIRICHLET, NEUMANN, BoundaryCondition
from .mesh import Mesh, generate_annulus, generate_disk, generate_rectangle
from .reference import (
    RadialSeriesParams,
    problem1_exact,
    problem1_source,
    problem2_exact,
    problem3_exact,
    problem4_exact,
    problem4_source,
)

__all__ = ["ProblemSpec", "PROBLEMS", "get_problem"]

SOURCE_TAG = "S_R1"


@dataclass(frozen=True)
class ProblemSpec:
    """One registered problem.

    ``bind(alpha, rho, tags, exact)`` returns the :class:`ProblemBinding`;
    ``tags`` are the outer tags of the mesh in use, ``exact`` says whether an
    exact solution applies (Caputo runs only).
    """

    id: str
    mesh: dict | None  # generator recipe, None when a mesh file is required
    bind: Callable[..., ProblemBinding]
    has_exact: bool
    defaults: dict = field(default_factory=dict)

    def build_mesh(self, **overrides) -> Mesh:
        if self.mesh is None:
            raise ValueError(f"{self.id} has no built-in mesh; supply a mesh file")
        recipe = {**self.mesh, **overrides}
        return generate(recipe)


def generate(recipe: dict) -> Mesh:
    recipe = dict(recipe)
    kind = recipe.pop("generator")
    fn = {"rectangle": generate_rectangle, "annulus": generate_annulus, "disk": generate_disk}.get(kind)
    if fn is None:
        raise ValueError(f"unknown mesh generator {kind!r}")
    return fn(**recipe)


def _bind1(alpha, rho, tags=None, exact=True):
    bcs = {
        "left": BoundaryCondition(DIRICHLET, lambda x, y, t: t ** (2 * alpha)),
        "right": BoundaryCondition(DIRICHLET, 0.0),
        "bottom": BoundaryCondition(NEUMANN, 0.0),
        "top": BoundaryCondition(NEUMANN, 0.0),
    }
    return ProblemBinding(
        bcs,
        phi0=0.0,
        source=lambda x, y, t: problem1_source(x, y, t, alpha, rho),
        exact=(lambda x, y, t: problem1_exact(x, y, t, alpha)) if exact else None,
    )


def _bind2(alpha, rho, tags=None, exact=True, c0=1.0, n_roots=200):
    params = RadialSeriesParams(alpha=alpha, rho=rho, value=c0, R=2.0, n_roots=n_roots)
    return ProblemBinding(
        {"rim": BoundaryCondition(DIRICHLET, c0)},
        phi0=0.0,
        exact=(lambda x, y, t: problem2_exact(x, y, t, params)) if exact else None,
    )


def _bind3(alpha, rho, tags=None, exact=True, phi_out=1.0, n_roots=200):
    params = RadialSeriesParams(alpha=alpha, rho=rho, value=phi_out, R_in=1.0, R_out=2.0, n_roots=n_roots)
    return ProblemBinding(
        {"inner": BoundaryCondition(NEUMANN, 0.0), "outer": BoundaryCondition(DIRICHLET, phi_out)},
        phi0=0.0,
        exact=(lambda x, y, t: problem3_exact(x, y, t, params)) if exact else None,
    )


def _bind4(alpha, rho, tags=None, exact=True):
    def wall(x, y, t):
        return problem4_exact(x, y, t, alpha)

    return ProblemBinding(
        {
            "left": BoundaryCondition(DIRICHLET, wall),
            "right": BoundaryCondition(DIRICHLET, wall),
            "bottom": BoundaryCondition(NEUMANN, 0.0),
            "top": BoundaryCondition(NEUMANN, 0.0),
        },
        phi0=1.0,
        source=lambda x, y, t: problem4_source(x, y, t, alpha),
        exact=(lambda x, y, t: problem4_exact(x, y, t, alpha)) if exact else None,
    )


def _source_boundary(value):
    def bind(alpha, rho, tags=None, exact=True):
        tags = list(tags or [])
        if SOURCE_TAG not in tags:
            raise ValueError(f"mesh must tag the prescribed-value boundary as {SOURCE_TAG!r}")
        bcs = {tag: BoundaryCondition(NEUMANN, 0.0) for tag in tags}
        bcs[SOURCE_TAG] = BoundaryCondition(DIRICHLET, value)
        return ProblemBinding(bcs, phi0=0.0)

    return bind


PROBLEMS: dict[str, ProblemSpec] = {
    "problem1": ProblemSpec(
        "problem1",
        {"generator": "rectangle", "nx": 16, "ny": 16, "x_range": (0.0, 1.0), "y_range": (0.0, 2.0)},
        _bind1,
        True,
        {
            "alpha": 0.5, "m": (3.0, 1.0, 1.0), "rho": 1.0, "dt": 2.5e-3, "t_end": 0.5,
            "probes": [Probe("y=0.25", (0.0, 0.25), (1.0, 0.0))],
            "snapshots": [0.1, 0.2, 0.4, 0.5],
        },
    ),
    "problem2": ProblemSpec(
        "problem2",
        {"generator": "disk", "n_core": 10, "n_ring": 8, "radius": 2.0},
        _bind2,
        True,
        {"alpha": 0.5, "m": (0.0, 0.0, 0.0), "rho": 1.0, "dt": 1.0 / 255.0, "t_end": 1.0,
         "probes": [Probe("all")], "snapshots": [1.0]},
    ),
    "problem3": ProblemSpec(
        "problem3",
        {"generator": "annulus", "nr": 6, "ntheta": 98, "r_in": 1.0, "r_out": 2.0},
        _bind3,
        True,
        {"alpha": 0.5, "m": (0.0, 0.0, 0.0), "rho": 1.0, "dt": 1.0 / 255.0, "t_end": 1.0,
         "probes": [Probe("all")], "snapshots": [1.0]},
    ),
    "problem4": ProblemSpec(
        "problem4",
        {"generator": "rectangle", "nx": 16, "ny": 16, "x_range": (-10.0, 10.0), "y_range": (-20.0, 20.0)},
        _bind4,
        True,
        {"alpha": 0.5, "m": (1.0, 1.0, 1.0), "rho": 1.0, "dt": 1.01e-3, "t_end": 0.1,
         "probes": [Probe("y=10", (0.0, 10.0), (1.0, 0.0))], "snapshots": [0.1]},
    ),
    "problem5": ProblemSpec(
        "problem5",
        None,
        _source_boundary(1.0),
        False,
        {"alpha": 0.5, "m": (2.0, 1.0, 1.0), "rho": 1.0, "dt": 7.84e-4, "t_end": 0.2,
         "probes": [Probe("y=0", (0.0, 0.0), (1.0, 0.0))], "snapshots": [0.2]},
    ),
    "problem6": ProblemSpec(
        "problem6",
        None,
        _source_boundary(10.0),
        False,
        {"alpha": 0.3, "m": (0.0, 0.0, 0.0), "rho": 1.0, "dt": 3.922e-2, "t_end": 10.0,
         "probes": [], "snapshots": [10.0]},
    ),
}


def get_problem(pid: str) -> ProblemSpec:
    try:
        return PROBLEMS[pid]
    except KeyError:
        raise ValueError(f"unknown problem {pid!r}; registered: {sorted(PROBLEMS)}") from None
