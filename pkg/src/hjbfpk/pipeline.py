"""Pipeline orchestration (HJB, FPK, diagnostics) and artifact emission."""

from __future__ import annotations

import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .core_model import Grid
from .diagnostics import (
    MertonReport,
    W2Report,
    merton_validation,
    monte_carlo_density_check,
    w2_contraction_check,
)
from .fpk_solver import StationaryDensity, solve_stationary
from .hjb_solver import (
    PolicySolution,
    SolverError,
    build_upwind_operator,
    check_m_matrix,
    solve_hjb,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_DIAGNOSTIC = 4
EXIT_SOLVER = 5

FPK_MASS_TOL = 1e-10
FPK_FLUX_TOL = 1e-8
MERTON_TOL = 1e-3
MC_L1_TOL = 0.15

SOLUTION_HEADER = "a,V,c,mu,p"
TRACE_HEADER = "iter,hjb_residual,foc_error,m_matrix_ok"

PASSED, FAILED, SKIPPED = "passed", "failed", "skipped"


def _num(x) -> str:
    return f"{float(x):.17e}"


@dataclass
class DiagnosticsReport:
    converged: bool = False
    iterations: int = 0
    seed: int = 0
    m_matrix_ok_all: bool = False
    fpk_mass: float | None = None
    fpk_flux_left: float | None = None
    fpk_flux_right: float | None = None
    fpk_flux_scale: float | None = None
    w2: W2Report | None = None
    merton: MertonReport | None = None
    mc_l1: float | None = None
    status: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(s != FAILED for s in self.status.values())

    def to_dict(self, include_timings=False) -> dict:
        out = {
            "converged": self.converged,
            "iterations": self.iterations,
            "seed": self.seed,
            "m_matrix_ok_all": self.m_matrix_ok_all,
            "fpk_mass": self.fpk_mass,
            "fpk_flux_left": self.fpk_flux_left,
            "fpk_flux_right": self.fpk_flux_right,
            "fpk_flux_scale": self.fpk_flux_scale,
            "w2": None,
            "merton": None,
            "mc_l1": self.mc_l1,
            "status": dict(sorted(self.status.items())),
            "notes": list(self.notes),
        }
        if self.w2 is not None:
            out["w2"] = {
                "median_ratio": self.w2.median_ratio,
                "iqr_lo": self.w2.iqr_lo,
                "iqr_hi": self.w2.iqr_hi,
                "contracting": self.w2.contracting,
                "overall_ratio": self.w2.overall_ratio,
                "excluded_steps": self.w2.excluded_steps,
                "per_step_ratios": [float(x) for x in self.w2.per_step_ratios],
            }
        if self.merton is not None:
            out["merton"] = {
                "kappa": self.merton.kappa,
                "regime": self.merton.regime,
                "rel_sup_error": self.merton.rel_sup_error,
                "converged": self.merton.converged,
            }
        if include_timings:
            out["wall_times"] = dict(self.wall_times)
        return out


@dataclass
class PipelineResult:
    exit_code: int
    report: DiagnosticsReport
    solution: PolicySolution | None = None
    density: StationaryDensity | None = None


def write_solution(solution, density, grid: Grid, path):
    p = density.p if density is not None else None
    lines = [SOLUTION_HEADER]
    for i, a in enumerate(grid.nodes):
        p_txt = _num(p[i]) if p is not None else ""
        lines.append(",".join((_num(a), _num(solution.v[i]), _num(solution.c[i]), _num(solution.mu[i]), p_txt)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_trace(solution, path):
    lines = [TRACE_HEADER]
    for rec in solution.trace:
        ok = "yes" if rec.m_matrix_ok else "no"
        lines.append(f"{rec.iteration},{_num(rec.hjb_residual)},{_num(rec.foc_error)},{ok}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_report(report: DiagnosticsReport, path, include_timings=False):
    text = json.dumps(report.to_dict(include_timings), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def emit_solution(solution, density, grid, out_dir, report=None, outputs=None):
    """Write ``solution.csv``, ``trace.csv`` and (when given) ``report.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    want = outputs
    if want is None or want.solution:
        write_solution(solution, density, grid, out / "solution.csv")
    if want is None or want.trace:
        write_trace(solution, out / "trace.csv")
    if report is not None:
        if want is None or want.report:
            write_report(report, out / "report.json")
        if want is not None and want.timings:
            (out / "timings.json").write_text(json.dumps(report.wall_times, indent=2, sort_keys=True) + "\n")


def read_solution(path, grid: Grid):
    """Load a ``solution.csv`` back into a PolicySolution and optional density values."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header != SOLUTION_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if len(rows) != grid.n_a:
        raise ValueError(f"{path}: {len(rows)} rows, grid has {grid.n_a} nodes")
    cols = np.array([[float(x) for x in row[:4]] for row in rows])
    if np.max(np.abs(cols[:, 0] - grid.nodes)) > 1e-12 * grid.a_max:
        raise ValueError(f"{path}: wealth column does not match the configured grid")
    p = None
    if all(row[4] for row in rows):
        p = np.array([float(row[4]) for row in rows])
    sol = PolicySolution(v=cols[:, 1], c=cols[:, 2], mu=cols[:, 3], trace=[], converged=True, iterations=0)
    return sol, p


def run_diagnostics(config: RunConfig, solution, density, report: DiagnosticsReport):
    """Run every enabled check on an existing solution and fill ``report``."""
    grid, params = config.grid, config.economics
    enabled = set(config.checks)
    times = report.wall_times

    if "fpk_flux" in enabled:
        if density is None:
            report.status["fpk_flux"] = SKIPPED
        else:
            scale = float(np.max(np.abs(solution.mu * density.p)))
            report.fpk_flux_scale = scale
            flux_ok = max(abs(density.flux_left), abs(density.flux_right)) <= FPK_FLUX_TOL * scale
            mass_ok = abs(density.mass - 1.0) <= FPK_MASS_TOL
            report.status["fpk_flux"] = PASSED if (flux_ok and mass_ok) else FAILED

    if "w2" in enabled:
        t0 = time.perf_counter()
        report.w2 = w2_contraction_check(solution, grid, params, config.simulation.w2)
        times["w2"] = time.perf_counter() - t0
        report.status["w2"] = PASSED if report.w2.contracting else FAILED

    if "merton" in enabled:
        t0 = time.perf_counter()
        try:
            report.merton = merton_validation(grid, params, config.solver)
        except ValueError as exc:
            report.notes.append(f"merton: {exc}")
            report.status["merton"] = SKIPPED
        else:
            ok = report.merton.converged and report.merton.rel_sup_error <= MERTON_TOL
            report.status["merton"] = PASSED if ok else FAILED
        times["merton"] = time.perf_counter() - t0

    if "mc_density" in enabled:
        if density is None:
            report.status["mc_density"] = SKIPPED
        else:
            t0 = time.perf_counter()
            report.mc_l1 = monte_carlo_density_check(solution, density, grid, params, config.simulation.mc)
            times["mc_density"] = time.perf_counter() - t0
            report.status["mc_density"] = PASSED if report.mc_l1 <= MC_L1_TOL else FAILED


def _density_from_values(p, solution, config):
    from .fpk_solver import compute_flux

    grid = config.grid
    flux = compute_flux(p, solution, grid, config.economics)
    return StationaryDensity(
        p=p, mass=float(p @ grid.trapezoid_weights()), flux_left=float(flux[0]), flux_right=float(flux[-1])
    )


def _fpk_stage(config, solution, report):
    if config.economics.sigma == 0:
        report.status["fpk"] = SKIPPED
        report.notes.append("fpk: skipped, stationary density is degenerate for sigma = 0")
        return None
    t0 = time.perf_counter()
    density = solve_stationary(solution, config.grid, config.economics)
    report.wall_times["fpk"] = time.perf_counter() - t0
    report.status["fpk"] = PASSED
    report.fpk_mass = density.mass
    report.fpk_flux_left = density.flux_left
    report.fpk_flux_right = density.flux_right
    return density


def run_pipeline(config: RunConfig, out_dir=None) -> PipelineResult:
    """Solve, post-process, compute the density, run diagnostics and write artifacts.

    Returns a PipelineResult whose ``exit_code`` follows the CLI contract:
    0 success, 3 no convergence, 4 a diagnostic failed, 5 hard solver error.
    """
    out = Path(out_dir or config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    report = DiagnosticsReport(seed=config.simulation.w2.seed)

    t0 = time.perf_counter()
    try:
        solution = solve_hjb(config.grid, config.economics, config.solver, config.postprocess)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PipelineResult(EXIT_SOLVER, report)
    report.wall_times["hjb"] = time.perf_counter() - t0
    report.converged = solution.converged
    report.iterations = solution.iterations
    report.m_matrix_ok_all = all(rec.m_matrix_ok for rec in solution.trace)

    if not solution.converged:
        report.notes.append(f"hjb: no convergence within {config.solver.max_iter} iterations")
        emit_solution(solution, None, config.grid, out, report, config.outputs)
        return PipelineResult(EXIT_NOT_CONVERGED, report, solution)

    try:
        density = _fpk_stage(config, solution, report)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        emit_solution(solution, None, config.grid, out, report, config.outputs)
        return PipelineResult(EXIT_SOLVER, report, solution)

    run_diagnostics(config, solution, density, report)
    emit_solution(solution, density, config.grid, out, report, config.outputs)
    code = EXIT_OK if report.passed else EXIT_DIAGNOSTIC
    return PipelineResult(code, report, solution, density)


def run_validation(config: RunConfig, solution_path, out_dir=None) -> PipelineResult:
    """Diagnostics only, on a previously written ``solution.csv``."""
    out = Path(out_dir or config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    solution, p = read_solution(solution_path, config.grid)
    report = DiagnosticsReport(seed=config.simulation.w2.seed, converged=True)
    op = build_upwind_operator(solution.c, config.grid, config.economics)
    report.m_matrix_ok_all = bool(check_m_matrix(op, config.economics.rho))
    density = None
    try:
        if p is not None:
            density = _density_from_values(p, solution, config)
            report.fpk_mass = density.mass
            report.fpk_flux_left = density.flux_left
            report.fpk_flux_right = density.flux_right
        else:
            density = _fpk_stage(config, solution, report)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PipelineResult(EXIT_SOLVER, report, solution)
    run_diagnostics(config, solution, density, report)
    if not report.m_matrix_ok_all:
        report.status["m_matrix"] = FAILED
    if config.outputs.report:
        write_report(report, out / "report.json")
    code = EXIT_OK if report.passed else EXIT_DIAGNOSTIC
    return PipelineResult(code, report, solution, density)
