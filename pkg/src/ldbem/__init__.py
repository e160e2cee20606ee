"""Local-domain boundary element solver for the 2D time-fractional Fisher-KPP equation."""

from .condense import NonlinearParams
from .driver import ProblemBinding, Probe, SimulationConfig, error_metrics, prepare_assets, run_simulation
from .frac_time import CAPUTO, FRACTAL_FRACTIONAL, FractionalScheme
from .global_system import DIRICHLET, NEUMANN, BoundaryCondition
from .kernels import DiscontinuousLayout, QuadratureConfig
from .mesh import Mesh, generate_annulus, generate_disk, generate_rectangle, export_mesh, import_mesh
from .problems import PROBLEMS, get_problem

__all__ = [
    "NonlinearParams",
    "ProblemBinding",
    "Probe",
    "SimulationConfig",
    "error_metrics",
    "prepare_assets",
    "run_simulation",
    "CAPUTO",
    "FRACTAL_FRACTIONAL",
    "FractionalScheme",
    "DIRICHLET",
    "NEUMANN",
    "BoundaryCondition",
    "DiscontinuousLayout",
    "QuadratureConfig",
    "Mesh",
    "generate_annulus",
    "generate_disk",
    "generate_rectangle",
    "export_mesh",
    "import_mesh",
    "PROBLEMS",
    "get_problem",
]
