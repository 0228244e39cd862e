"""Experiment orchestration: presets, run configuration, single runs and studies.

A run goes Darcy pressure -> velocity -> ultraweak normal equation ->
reconstruction, with an upwind DG solve of the same problem as reference.
All outputs are deterministic for a given configuration except the optional
wall-clock column of the convergence CSV (``timing = false`` zeroes it out).
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import io
from .coefficients import (
    REACTIVE_BOX,
    BoundaryData,
    ConstantField,
    ScalarField,
    VelocityField,
    constant_velocity,
    permeability,
    reaction,
    sin2_bump,
)
from .darcy import PressureSolution, mass_balance, solve_pressure
from .linalg import Precond, estimate_condition
from .mesh import (
    CHANNEL_GEOMETRY,
    FILTER_GEOMETRY,
    AlignmentError,
    Label,
    Mesh,
    Segment,
    build_mesh,
    cell_points,
    gauss_rule,
)
from .reconstruct import inflow_loading, l2_error_volume, outflow_trace, qoi_outflow_flux, voxelize
from .reference_dg import DgSolution, dg_outflow_flux, solve_dg
from .ultraweak import NormalEquationSystem, UltraweakSolution, build_system, check_orthogonality, solve_ultraweak

log = logging.getLogger(__name__)

CONVERGENCE_HEADER = ["gridwidth", "l2error", "dofs", "iterations", "kappa", "seconds"]
CONDITION_HEADER = ["gridwidth", "dofs", "kappa", "ratio", "lambda_min", "lambda_max", "lanczos_steps", "breakdown"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class SolverFailure(RuntimeError):
    """A linear solve did not reach its tolerance."""


class Preset(enum.Enum):
    CATALYTIC_FILTER = "catalytic_filter"
    CHANNEL = "channel"
    MANUFACTURED_1D = "manufactured_1d"
    CUSTOM = "custom"


def _segments(geometry, label):
    return tuple(geometry[label])


# parameter defaults per preset; CUSTOM starts from the filter values
PRESET_DEFAULTS: dict[Preset, dict] = {
    Preset.CATALYTIC_FILTER: dict(
        k_min=0.1,
        c0=0.5,
        box=REACTIVE_BOX,
        inflow=_segments(FILTER_GEOMETRY, Label.IN),
        outflow=_segments(FILTER_GEOMETRY, Label.OUT),
        g_d="sin2",
        grids=(15, 30, 60, 120),
    ),
    Preset.CHANNEL: dict(
        k_min=1.0,
        c0=0.0,
        box=REACTIVE_BOX,
        inflow=_segments(CHANNEL_GEOMETRY, Label.IN),
        outflow=_segments(CHANNEL_GEOMETRY, Label.OUT),
        g_d="1",
        grids=(15, 30, 60),
    ),
    Preset.MANUFACTURED_1D: dict(
        k_min=1.0,
        c0=1.0,
        box=(0.0, 1.0, 0.0, 1.0),
        inflow=_segments(CHANNEL_GEOMETRY, Label.IN),
        outflow=_segments(CHANNEL_GEOMETRY, Label.OUT),
        g_d="1",
        grids=(16, 32, 64, 128),
    ),
}
PRESET_DEFAULTS[Preset.CUSTOM] = dict(PRESET_DEFAULTS[Preset.CATALYTIC_FILTER])


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run. Build with :meth:`for_preset` or :func:`load_config`."""

    preset: Preset = Preset.CATALYTIC_FILTER
    grids: tuple[int, ...] = (15, 30, 60, 120)
    order: int = 1
    tol: float = 1e-10
    precond: str = "ssor"
    maxit: int | None = None
    darcy_order: int = 2
    darcy_precond: str = "amg"
    darcy_tol: float = 1e-12
    k_min: float = 0.1
    c0: float = 0.5
    box: tuple[float, float, float, float] = REACTIVE_BOX
    inflow: tuple[Segment, ...] = _segments(FILTER_GEOMETRY, Label.IN)
    outflow: tuple[Segment, ...] = _segments(FILTER_GEOMETRY, Label.OUT)
    g_d: str = "sin2"
    ref_factor: int = 4
    voxel_factor: int = 4
    voxel_q: int = 2
    kappa: str = "inverse"
    condition_method: str = "inverse"
    lanczos_iters: int = 200
    seed: int = 0
    timing: bool = True
    out: Path = Path("out")

    @classmethod
    def for_preset(cls, preset: Preset | str = Preset.CATALYTIC_FILTER, **overrides) -> "RunConfig":
        preset = _parse_preset(preset)
        values = dict(PRESET_DEFAULTS[preset])
        values.update(overrides)
        cfg = cls(preset=preset, **values)
        cfg.validate()
        return cfg

    def replace(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    @property
    def geometry(self):
        return {Label.IN: self.inflow, Label.OUT: self.outflow}

    @property
    def uses_darcy(self) -> bool:
        return self.preset is not Preset.MANUFACTURED_1D

    def validate(self) -> None:
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order}")
        if self.darcy_order not in (1, 2):
            raise ConfigError(f"darcy_order must be 1 or 2, got {self.darcy_order}")
        if not self.grids or any(int(n) < 1 for n in self.grids):
            raise ConfigError(f"grid sizes must be positive, got {self.grids}")
        if not self.tol > 0 or not self.darcy_tol > 0:
            raise ConfigError("tolerances must be positive")
        for name in ("precond", "darcy_precond"):
            try:
                Precond(getattr(self, name))
            except ValueError:
                raise ConfigError(f"unknown {name} {getattr(self, name)!r}") from None
        if self.kappa not in ("none", "lanczos", "inverse"):
            raise ConfigError(f"kappa must be none, lanczos or inverse, got {self.kappa!r}")
        if self.condition_method not in ("lanczos", "inverse"):
            raise ConfigError(f"condition_method must be lanczos or inverse, got {self.condition_method!r}")
        if self.ref_factor < 1 or self.voxel_factor < 1 or not 1 <= self.voxel_q <= 10:
            raise ConfigError("ref_factor, voxel_factor must be >= 1 and voxel_q in 1..10")
        if self.k_min <= 0:
            raise ConfigError("k_min must be positive")
        if self.c0 < 0:
            raise ConfigError("c0 must be non-negative")
        _inflow_function(self.g_d)
        for n in self.grids:
            self.check_grid(int(n))

    def check_grid(self, n: int) -> None:
        """Raise :class:`ConfigError` if grid ``n`` misses a geometric feature."""
        try:
            _build_mesh(self, n)
        except AlignmentError as exc:
            raise ConfigError(f"grid {n}: {exc}") from None

    def as_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Preset):
                v = v.value
            elif isinstance(v, Path):
                v = str(v)
            elif f.name in ("inflow", "outflow"):
                v = [f"{s.side}:{s.lo!r}:{s.hi!r}" for s in v]
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d


def _parse_preset(value) -> Preset:
    if isinstance(value, Preset):
        return value
    try:
        return Preset(str(value).strip().lower())
    except ValueError:
        names = ", ".join(p.value for p in Preset)
        raise ConfigError(f"unknown preset {value!r} (choose from {names})") from None


def _inflow_function(spec: str) -> Callable:
    spec = str(spec).strip().lower()
    if spec == "sin2":
        return sin2_bump
    try:
        value = float(spec)
    except ValueError:
        raise ConfigError(f"g_d must be 'sin2' or a number, got {spec!r}") from None
    return lambda z: np.full(np.shape(z), value)


def _parse_segments(text: str) -> tuple[Segment, ...]:
    segs = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            side, lo, hi = part.split(":")
            segs.append(Segment(side.strip(), _parse_number(lo), _parse_number(hi)))
        except ValueError as exc:
            raise ConfigError(f"bad segment {part!r}, expected side:lo:hi ({exc})") from None
    return tuple(segs)


def _parse_number(text: str) -> float:
    """Float or simple fraction such as ``2/3``."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_PARSERS: dict[str, Callable[[str], object]] = {
    "grids": lambda s: tuple(int(v) for v in s.replace(" ", "").split(",") if v),
    "order": int,
    "tol": float,
    "precond": str.strip,
    "maxit": int,
    "darcy_order": int,
    "darcy_precond": str.strip,
    "darcy_tol": float,
    "k_min": float,
    "c0": float,
    "box": lambda s: tuple(_parse_number(v) for v in s.split(",")),
    "inflow": _parse_segments,
    "outflow": _parse_segments,
    "g_d": str.strip,
    "ref_factor": int,
    "voxel_factor": int,
    "voxel_q": int,
    "kappa": str.strip,
    "condition_method": str.strip,
    "lanczos_iters": int,
    "seed": int,
    "timing": _parse_bool,
    "out": Path,
}


def parse_settings(settings: Mapping[str, str]) -> RunConfig:
    """Build a config from string settings (config file entries, CLI flags)."""
    settings = {k.strip().lower(): v for k, v in settings.items()}
    preset = _parse_preset(settings.pop("preset", Preset.CATALYTIC_FILTER))
    values = {}
    for key, raw in settings.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown setting {key!r}")
        try:
            values[key] = _PARSERS[key](str(raw))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    if "box" in values and len(values["box"]) != 4:
        raise ConfigError("box needs four numbers x0,x1,y0,y1")
    try:
        return RunConfig.for_preset(preset, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    text = Path(path).read_text()
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return dict(parser["run"])


def load_config(path=None, **overrides: str) -> RunConfig:
    """Config file entries, then ``overrides`` (already strings) on top."""
    settings = read_config_file(path) if path is not None else {}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return parse_settings(settings)


# ---------------------------------------------------------------- problems


@dataclass(eq=False)
class Problem:
    """Discrete data of one run on one grid."""

    mesh: Mesh
    b: VelocityField
    c: ScalarField
    f0: ScalarField | None
    g: BoundaryData
    pressure: PressureSolution | None = None
    exact: Callable | None = None


def _build_mesh(cfg: RunConfig, n: int) -> Mesh:
    if cfg.preset is Preset.MANUFACTURED_1D:
        return build_mesh(n, 1, CHANNEL_GEOMETRY)
    mesh = build_mesh(n, n, cfg.geometry)
    permeability(cfg.k_min, cfg.box, mesh)
    return mesh


def manufactured_solution(x, y, c0: float = 1.0):
    """Exact solution of ``u' + c0 u = 0``, ``u(0) = 1``."""
    return np.exp(-c0 * np.asarray(x)) + 0.0 * np.asarray(y)


def setup_problem(cfg: RunConfig, n: int) -> Problem:
    """Mesh, coefficients and (for Darcy presets) the pressure solve on grid ``n``."""
    try:
        mesh = _build_mesh(cfg, n)
    except AlignmentError as exc:
        raise ConfigError(f"grid {n}: {exc}") from None
    g = BoundaryData({Label.IN: _inflow_function(cfg.g_d)})
    if cfg.preset is Preset.MANUFACTURED_1D:
        c0 = cfg.c0
        return Problem(
            mesh, constant_velocity(1.0, 0.0), ConstantField(c0), None, g, exact=lambda x, y: manufactured_solution(x, y, c0)
        )
    k = permeability(cfg.k_min, cfg.box, mesh)
    pressure = solve_pressure(mesh, k, cfg.darcy_order, precond=cfg.darcy_precond, tol=cfg.darcy_tol)
    if not pressure.report.converged:
        raise SolverFailure(f"Darcy solve on grid {n} stopped at residual {pressure.report.residual:.3e}")
    c = reaction(cfg.c0, cfg.box, mesh)
    return Problem(mesh, pressure.velocity, c, None, g, pressure)


def solve_transport(problem: Problem, cfg: RunConfig) -> tuple[NormalEquationSystem, UltraweakSolution]:
    system = build_system(problem.mesh, cfg.order, problem.b, problem.c, problem.f0, problem.g)
    sol = solve_ultraweak(system, precond=cfg.precond, tol=cfg.tol, maxit=cfg.maxit)
    return system, sol


def solve_reference(problem: Problem, cfg: RunConfig) -> DgSolution:
    return solve_dg(problem.mesh, problem.b, problem.c, problem.f0, problem.g)


def _require(report, what: str) -> None:
    if not report.converged:
        raise SolverFailure(f"{what} stopped after {report.iterations} iterations at residual {report.residual:.3e}")


# ---------------------------------------------------------------- single run


def _vertex_values(func, mesh: Mesh) -> np.ndarray:
    x, y = np.meshgrid(np.linspace(0.0, 1.0, mesh.nx + 1), np.linspace(0.0, 1.0, mesh.ny + 1))
    return func(x.ravel(), y.ravel())


def _cell_mean_speed(b: VelocityField, mesh: Mesh) -> np.ndarray:
    rule = gauss_rule(3)
    cells, local, _ = cell_points(mesh, rule.points)
    speed = np.linalg.norm(b.at(mesh, cells, local), axis=-1)
    return speed @ rule.weights


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def _mkdir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_single(cfg: RunConfig, n: int | None = None, write: bool = True) -> dict:
    """Full pipeline on one grid; writes VTK fields and ``summary.json`` to ``cfg.out``.

    Returns the summary dictionary.
    """
    n = cfg.grids[0] if n is None else n
    problem = setup_problem(cfg, n)
    system, sol = solve_transport(problem, cfg)
    _require(sol.report, "ultraweak CG")
    dg = solve_reference(problem, cfg)
    _require(dg.report, "DG solve")
    mesh = problem.mesh

    trace = outflow_trace(sol)
    means = dg.cell_means()
    summary = {
        "preset": cfg.preset.value,
        "grid": [mesh.nx, mesh.ny],
        "order": cfg.order,
        "dofs": system.space.ndofs,
        "solver": sol.report.as_dict(),
        "orthogonality": check_orthogonality(system, sol),
        "outflow_flux": qoi_outflow_flux(sol),
        "inflow_loading": inflow_loading(mesh, problem.b, problem.g),
        "trace_min": float(trace.values.min()),
        "dg": {
            "solver": dg.report.as_dict(),
            "outflow_flux": dg_outflow_flux(dg),
            "cell_mean_min": float(means.min()),
            "cell_mean_max": float(means.max()),
        },
        "l2_distance_to_dg": l2_error_volume(sol, dg),
    }
    if problem.exact is not None:
        summary["l2_error_exact"] = l2_error_volume(sol, problem.exact, q=4)
    if problem.pressure is not None:
        ps = problem.pressure
        summary["darcy"] = {
            "order": ps.pressure.space.order,
            "solver": ps.report.as_dict(),
            "bounds_violation": ps.bounds_violation(),
            "mass_balance": dataclasses.asdict(mass_balance(ps)),
            "mass_balance_consistent": dataclasses.asdict(mass_balance(ps, method="consistent")),
        }

    if write:
        out = _mkdir(cfg.out)
        if problem.pressure is not None:
            io.write_point_data(out / "pressure.vtk", mesh, _vertex_values(problem.pressure.pressure, mesh), "pressure")
        io.write_cell_data(out / "velocity_magnitude.vtk", mesh, _cell_mean_speed(problem.b, mesh), "speed")
        vox = voxelize(sol, cfg.voxel_factor * mesh.nx, cfg.voxel_factor * mesh.ny, cfg.voxel_q)
        io.write_structured_points(out / "u_voxels.vtk", vox.values, "u")
        io.write_voxel_csv(out / "u_voxels.csv", vox)
        io.write_cell_data(out / "dg_reference.vtk", mesh, means, "u_dg")
        _write_json(out / "summary.json", {"config": cfg.as_dict(), **summary})
    return summary


def run_voxelize(cfg: RunConfig, n: int | None = None, factor: int | None = None):
    """Solve on one grid and write only the voxelized ``u`` (VTK and CSV)."""
    n = cfg.grids[0] if n is None else n
    factor = cfg.voxel_factor if factor is None else factor
    problem = setup_problem(cfg, n)
    _, sol = solve_transport(problem, cfg)
    _require(sol.report, "ultraweak CG")
    mesh = problem.mesh
    try:
        vox = voxelize(sol, factor * mesh.nx, factor * mesh.ny, cfg.voxel_q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _mkdir(cfg.out)
    io.write_structured_points(out / "u_voxels.vtk", vox.values, "u")
    io.write_voxel_csv(out / "u_voxels.csv", vox)
    return vox


# ---------------------------------------------------------------- studies


def fit_rate(h, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)`` over finite entries."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


@dataclass
class ConvergenceRow:
    grid: int
    gridwidth: float
    l2error: float
    dofs: int
    iterations: int
    kappa: float
    seconds: float
    converged: bool = True
    status: str = "ok"

    def csv_row(self) -> list:
        return [self.gridwidth, self.l2error, self.dofs, self.iterations, self.kappa, self.seconds]


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    rate: float
    reference: str
    meta: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[ConvergenceRow]:
        return [r for r in self.rows if r.status != "ok"]


def _kappa(A, method: str, cfg: RunConfig):
    if method == "none":
        return None
    return estimate_condition(A, cfg.lanczos_iters, cfg.seed, inverse=(method == "inverse"))


def convergence_reference(cfg: RunConfig):
    """Reference solution and its description: exact if known, else DG on ``h_min / ref_factor``."""
    if cfg.preset is Preset.MANUFACTURED_1D:
        return (lambda x, y: manufactured_solution(x, y, cfg.c0)), "exact", None
    n_ref = max(cfg.grids) * cfg.ref_factor
    for n in cfg.grids:
        if n_ref % n:
            raise ConfigError(f"grid {n} does not divide the reference grid {n_ref}")
    problem = setup_problem(cfg, n_ref)
    dg = solve_reference(problem, cfg)
    _require(dg.report, "reference DG solve")
    return dg, f"dg_q1_{n_ref}x{n_ref}", n_ref


def run_convergence(cfg: RunConfig, write: bool = True) -> ConvergenceReport:
    """h-convergence of the volume part of ``u`` against a reference.

    Writes ``convergence.csv`` (header ``gridwidth,l2error,dofs,iterations,kappa,seconds``)
    and ``convergence_meta.json`` to ``cfg.out``. A grid that fails gets a row
    with ``nan`` error and is listed under ``failures`` in the metadata.
    """
    if len(cfg.grids) < 3:
        raise ConfigError(f"a convergence study needs at least 3 grids, got {len(cfg.grids)}")
    reference, ref_name, n_ref = convergence_reference(cfg)
    rows = []
    for n in sorted(cfg.grids):
        t0 = time.perf_counter()
        try:
            problem = setup_problem(cfg, n)
            system, sol = solve_transport(problem, cfg)
            if n_ref is None:
                err = l2_error_volume(sol, reference, q=4)
            else:
                err = l2_error_volume(sol, reference, (n_ref, n_ref))
            est = _kappa(system.gram, cfg.kappa, cfg)
            status = "ok" if sol.report.converged else f"solver stopped at residual {sol.report.residual:.3e}"
            row = ConvergenceRow(
                n,
                1.0 / n,
                err if sol.report.converged else math.nan,
                system.space.ndofs,
                sol.report.iterations,
                math.nan if est is None else est.kappa,
                0.0,
                sol.report.converged,
                status,
            )
        except (SolverFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.error("grid %d failed: %s", n, exc)
            row = ConvergenceRow(n, 1.0 / n, math.nan, 0, 0, math.nan, 0.0, False, str(exc))
        row.seconds = time.perf_counter() - t0 if cfg.timing else 0.0
        rows.append(row)
        log.info("grid %d: error %.4e, %d iterations", n, row.l2error, row.iterations)

    rate = fit_rate([r.gridwidth for r in rows], [r.l2error for r in rows])
    meta = {
        "config": cfg.as_dict(),
        "reference": ref_name,
        "rate": rate,
        "seed": cfg.seed,
        "failures": [{"grid": r.grid, "status": r.status} for r in rows if r.status != "ok"],
    }
    report = ConvergenceReport(rows, rate, ref_name, meta)
    if write:
        out = _mkdir(cfg.out)
        io.write_rows(out / "convergence.csv", CONVERGENCE_HEADER, [r.csv_row() for r in rows])
        _write_json(out / "convergence_meta.json", meta)
    return report


@dataclass
class ConditionRow:
    grid: int
    gridwidth: float
    dofs: int
    kappa: float
    ratio: float
    lambda_min: float
    lambda_max: float
    steps: int
    breakdown: bool

    def csv_row(self) -> list:
        return [
            self.gridwidth,
            self.dofs,
            self.kappa,
            self.ratio,
            self.lambda_min,
            self.lambda_max,
            self.steps,
            int(self.breakdown),
        ]


def run_condition_study(cfg: RunConfig, write: bool = True) -> list[ConditionRow]:
    """Condition estimates of the Gram matrix per grid and ratios between consecutive grids.

    Writes ``condition.csv``; the first row (and any single-grid study) has ``nan`` ratio.
    """
    rows: list[ConditionRow] = []
    for n in sorted(cfg.grids):
        problem = setup_problem(cfg, n)
        system = build_system(problem.mesh, cfg.order, problem.b, problem.c, problem.f0, problem.g)
        est = _kappa(system.gram, cfg.condition_method, cfg)
        ratio = est.kappa / rows[-1].kappa if rows else math.nan
        if est.breakdown:
            log.warning("Lanczos breakdown on grid %d", n)
        rows.append(
            ConditionRow(
                n, 1.0 / n, system.space.ndofs, est.kappa, ratio, est.lambda_min, est.lambda_max, est.iterations,
                est.breakdown,
            )
        )
    if write:
        out = _mkdir(cfg.out)
        io.write_rows(out / "condition.csv", CONDITION_HEADER, [r.csv_row() for r in rows])
    return rows
