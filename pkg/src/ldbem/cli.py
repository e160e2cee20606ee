"""Command-line interface: ``run <config>``, ``mesh <generator> ... <out>``, ``verify <suite>``.

Exit codes: 0 success, 1 failed verification, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .condense import NonlinearParams
from .driver import ConvergenceError, ProblemBinding, Probe, SimulationConfig, prepare_assets, run_simulation
from .frac_time import CAPUTO, FRACTAL_FRACTIONAL, FractionalScheme
from .global_system import BoundaryCondition, SingularSystemError
from .kernels import DiscontinuousLayout, KernelError
from .mesh import Mesh, MeshError, export_mesh, import_mesh
from .problems import PROBLEMS, generate, get_problem

log = logging.getLogger("ldbem")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeneratorMesh(_Strict):
    generator: Literal["rectangle", "annulus", "disk"]
    nx: Optional[int] = None
    ny: Optional[int] = None
    x_range: Optional[tuple[float, float]] = None
    y_range: Optional[tuple[float, float]] = None
    nr: Optional[int] = None
    ntheta: Optional[int] = None
    r_in: Optional[float] = None
    r_out: Optional[float] = None
    center: Optional[tuple[float, float]] = None
    n_core: Optional[int] = None
    n_ring: Optional[int] = None
    radius: Optional[float] = None
    core_fraction: Optional[float] = None

    def recipe(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class FileMesh(_Strict):
    file: str


class SchemeModel(_Strict):
    kind: Literal["caputo", "ffp_rl"] = CAPUTO
    alpha: float
    beta: float = 1.0


class BCModel(_Strict):
    tag: str
    kind: Literal["dirichlet", "neumann"]
    value: float = 0.0


class ProbeModel(_Strict):
    name: Optional[str] = None
    point: Optional[tuple[float, float]] = None
    direction: Optional[tuple[float, float]] = None
    tolerance: Optional[float] = Field(default=None, gt=0)
    all: bool = False

    @model_validator(mode="after")
    def _shape(self):
        if self.all and (self.point is not None or self.direction is not None):
            raise ValueError("a whole-field probe takes no point or direction")
        if not self.all and (self.point is None or self.direction is None):
            raise ValueError("a line probe needs both point and direction")
        if self.direction is not None and np.hypot(*self.direction) == 0:
            raise ValueError("probe direction must be nonzero")
        return self

    def to_probe(self, i: int) -> Probe:
        if self.all:
            return Probe(self.name or "all")
        name = self.name or f"line{i}"
        return Probe(name, tuple(self.point), tuple(self.direction), self.tolerance)


class RunConfig(_Strict):
    problem: str
    mesh: Optional[Union[GeneratorMesh, FileMesh]] = None
    scheme: SchemeModel
    m: Optional[tuple[float, float, float]] = None
    rho: Optional[float] = Field(default=None, gt=0)
    dt: float = Field(gt=0)
    t_end: float = Field(gt=0)
    tol_nl: float = Field(default=1e-8, gt=0)
    max_nl_iters: int = Field(default=50, ge=1)
    bcs: Optional[list[BCModel]] = None
    phi0: float = 0.0
    probes: Optional[list[ProbeModel]] = None
    snapshots: list[float] = Field(default_factory=list)
    output_dir: str = "output"
    xi_c: Optional[float] = Field(default=None, gt=0, lt=1)
    workers: int = Field(default=1, ge=1)

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, v):
        if v != "custom" and v not in PROBLEMS:
            raise ValueError(f"unknown problem {v!r}; expected 'custom' or one of {sorted(PROBLEMS)}")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        if self.t_end < self.dt * (1 - 1e-9):
            raise ValueError("t_end must be at least dt")
        if self.problem == "custom":
            if self.mesh is None:
                raise ValueError("custom problems need a mesh")
            if not self.bcs:
                raise ValueError("custom problems need bcs")
        elif self.bcs is not None:
            raise ValueError("bcs are only accepted for problem 'custom'")
        return self


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "config"
            msgs.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs)) from exc


def _build_mesh(cfg: RunConfig, base: Path) -> Mesh:
    if isinstance(cfg.mesh, FileMesh):
        path = Path(cfg.mesh.file)
        path = path if path.is_absolute() else base / path
        try:
            return import_mesh(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read mesh file {path}: {exc}") from exc
    if isinstance(cfg.mesh, GeneratorMesh):
        return generate(cfg.mesh.recipe())
    return get_problem(cfg.problem).build_mesh()


def _binding(cfg: RunConfig, mesh: Mesh, rho: float) -> tuple[ProblemBinding, list[Probe]]:
    tags = sorted(set(mesh.outer_tags().values()))
    if cfg.problem == "custom":
        bcs = {}
        for bc in cfg.bcs:
            if bc.tag in bcs:
                raise ConfigError(f"duplicate boundary condition for tag {bc.tag!r}")
            bcs[bc.tag] = BoundaryCondition(bc.kind, bc.value)
        missing = [t for t in tags if t not in bcs]
        if missing:
            raise ConfigError(f"no boundary condition for mesh tag(s) {missing}")
        binding = ProblemBinding(bcs, phi0=cfg.phi0)
        default_probes: list[Probe] = []
    else:
        spec = get_problem(cfg.problem)
        exact = spec.has_exact and cfg.scheme.kind == CAPUTO
        try:
            binding = spec.bind(cfg.scheme.alpha, rho, tags, exact)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        default_probes = spec.defaults.get("probes", [])
    probes = default_probes if cfg.probes is None else [p.to_probe(i) for i, p in enumerate(cfg.probes)]
    return binding, probes


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _tlabel(t: float) -> str:
    return f"{t:.6f}".rstrip("0").rstrip(".")


def _write_csv(path: Path, header: str, rows) -> None:
    with path.open("w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def cmd_run(path: str) -> int:
    t0 = time.perf_counter()
    try:
        cfg = load_config(path)
        defaults = {} if cfg.problem == "custom" else get_problem(cfg.problem).defaults
        m = cfg.m if cfg.m is not None else defaults.get("m", (0.0, 0.0, 0.0))
        rho = cfg.rho if cfg.rho is not None else defaults.get("rho", 1.0)
        params = NonlinearParams(*m, rho=rho)
        scheme = FractionalScheme(cfg.scheme.kind, cfg.scheme.alpha, cfg.dt, cfg.scheme.beta)
        mesh = _build_mesh(cfg, Path(path).resolve().parent)
        binding, probes = _binding(cfg, mesh, rho)
        sim = SimulationConfig(scheme, params, binding, cfg.t_end, cfg.tol_nl, cfg.max_nl_iters,
                               probes, list(cfg.snapshots))
        layout = DiscontinuousLayout() if cfg.xi_c is None else DiscontinuousLayout(cfg.xi_c)
        out = Path(cfg.output_dir)
        if not out.is_absolute():
            out = Path(path).resolve().parent / out
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out.mkdir(parents=True, exist_ok=True)
    logfile = logging.FileHandler(out / "run.log", mode="w")
    logfile.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root = logging.getLogger()
    root.addHandler(logfile)
    root.setLevel(logging.INFO)
    try:
        log.info("config %s: %d quads, %s alpha=%g dt=%g t_end=%g", path, mesh.n_quads,
                 scheme.kind, scheme.alpha, scheme.dt, cfg.t_end)
        try:
            assets = prepare_assets(mesh, binding.bcs, layout=layout, workers=cfg.workers)
        except MeshError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        log.info("assembled subdomain blocks in %.2fs", assets.assembly_seconds)
        try:
            result = run_simulation(sim, assets=assets)
        except (ConvergenceError, SingularSystemError, KernelError, ArithmeticError, ValueError) as exc:
            log.error("run failed: %s", exc)
            print(f"runtime error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        _write_outputs(out, cfg, result)
        log.info("finished %d steps in %.2fs (max lagging iterations %d, max residual %.2e)",
                 result.steps, time.perf_counter() - t0, max(result.state.iterations),
                 max(result.state.residuals))
        for k, v in result.timing.items():
            log.info("time %s: %.3fs", k, v)
    finally:
        root.removeHandler(logfile)
        logfile.close()
    print(f"wrote results to {out}")
    return EXIT_OK


def _write_outputs(out: Path, cfg: RunConfig, result) -> None:
    for snap in result.snapshots:
        rows = np.column_stack([snap.points, snap.phi])
        _write_csv(out / f"snapshot_t{_tlabel(snap.time)}.csv", "x,y,phi", rows)
    for rec in result.errors:
        rows = np.column_stack([rec.s, rec.points, rec.phi, rec.exact, np.abs(rec.phi - rec.exact)])
        _write_csv(out / f"probe_{rec.probe}_t{_tlabel(rec.time)}.csv", "s,x,y,phi,exact,abs_err", rows)
    if any(np.isfinite(r.e_inf) for r in result.errors):
        report = {
            "errors": [
                {"probe": r.probe, "time": float(r.time), "E_inf": float(r.e_inf), "E_2": float(r.e_2),
                 "nodes": r.n_nodes}
                for r in result.errors
            ],
            "steps": result.steps,
            "max_lagging_iterations": int(max(result.state.iterations)),
            "config": cfg.model_dump(mode="json"),
        }
        (out / "error_report.yaml").write_text(yaml.safe_dump(report, sort_keys=False))


def _parse_value(text: str):
    if "," in text:
        return tuple(float(v) for v in text.split(","))
    try:
        return int(text)
    except ValueError:
        return float(text)


def cmd_mesh(generator: str, params: list[str], out: str) -> int:
    recipe = {"generator": generator}
    try:
        for item in params:
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"mesh parameter {item!r} is not key=value")
            recipe[key] = _parse_value(val)
        mesh = GeneratorMesh.model_validate(recipe)
        text = export_mesh(generate(mesh.recipe()))
    except (ConfigError, ValidationError, MeshError, ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    Path(out).write_text(text)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_verify(suite: str) -> int:
    from .verify import SUITES, run_suite

    if suite not in SUITES:
        print(f"configuration error: unknown suite {suite!r}; choose from {sorted(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        checks = run_suite(suite)
    except (ConvergenceError, SingularSystemError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{suite}: {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldbem", description="Local-domain BEM solver for time-fractional Fisher-KPP problems")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a simulation from a YAML config")
    p.add_argument("config")
    p = sub.add_parser("mesh", help="generate a mesh file, e.g. `mesh rectangle nx=16 ny=16 out.mesh`")
    p.add_argument("generator")
    p.add_argument("args", nargs="+", metavar="key=value ... out")
    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "mesh":
        *params, out = args.args
        return cmd_mesh(args.generator, params, out)
    return cmd_verify(args.suite)


if __name__ == "__main__":
    sys.exit(main())
