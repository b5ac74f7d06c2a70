"""Convergence studies: refinement loop, L2 errors, EOC and report output."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import CoupledSystem, ScalarSystem
from .errors import ConfigurationError, EvolfemError
from .fespace import (build_bulk_space, build_surface_space, build_trace_map, geometry_batch)
from .mesh import ball_mesh, boundary_surface, sphere_mesh
from .problems import PROBLEM_IDS, get_problem
from .refelem import make_quadrature
from .solver import SCHEME_ID, LinearSolverConfig, integrate

log = logging.getLogger(__name__)

CSV_COLUMNS = ["level", "h", "tau", "steps", "dofs", "err_bulk", "err_surf",
               "eoc_bulk", "eoc_surf", "assembly_s", "solve_s", "gmres_iters"]
FORMATS = ("table", "csv", "json")


@dataclass
class StudyConfig:
    problem: str
    order: int
    min_level: int = 0
    max_level: int = 2
    tau0: float = 1.0
    final_time: float = 1.0
    solver: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    quad_degree: int | None = None
    format: str = "table"
    out: str | None = None
    vtk_every: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.problem not in PROBLEM_IDS:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        if self.order not in get_problem(self.problem).supported_orders:
            raise ConfigurationError(
                f"order {self.order} not supported for the {self.problem} problem")
        if not 0 <= self.min_level <= self.max_level:
            raise ConfigurationError("need 0 <= min_level <= max_level")
        if not (self.tau0 > 0 and self.final_time > 0):
            raise ConfigurationError("tau0 and final_time must be positive")
        if self.format not in FORMATS:
            raise ConfigurationError(f"unknown format {self.format!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")

    @property
    def quadrature_degree(self) -> int:
        return 2 * self.order + 2 if self.quad_degree is None else self.quad_degree


@dataclass
class LevelRecord:
    level: int
    h: float
    tau: float
    steps: int
    dofs: int
    err_bulk: float | None = None
    err_surf: float | None = None
    eoc_bulk: float | None = None
    eoc_surf: float | None = None
    assembly_s: float = 0.0
    solve_s: float = 0.0
    gmres_iters: int = 0
    failed: bool = False
    message: str = ""


@dataclass
class ConvergenceReport:
    problem: str
    order: int
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.rows)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def to_dict(self) -> dict:
        return {"problem": self.problem, "order": self.order,
                "metadata": self.metadata, "rows": [asdict(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d) -> "ConvergenceReport":
        return cls(d["problem"], d["order"], [LevelRecord(**r) for r in d["rows"]],
                   dict(d.get("metadata", {})))


# ------------------------------------------------------------ errors / eoc

def l2_error(space, alpha, t, exact, rule=None) -> float:
    """L2 distance on the discrete domain between U_h and the ambient exact field."""
    g = geometry_batch(space, t, rule)
    uh = np.einsum("qi,ei->eq", g.basis, np.asarray(alpha)[space.element_dofs])
    diff = uh - exact(g.points, t)
    return math.sqrt(float((g.dx * diff ** 2).sum()))


def l2_error_at_final_time(spaces, alpha, t, exact_fields, rules=None):
    """Errors for one space or, for the coupled problem, (bulk, surface)."""
    if not isinstance(spaces, (tuple, list)):
        return l2_error(spaces, alpha, t, exact_fields, rules)
    out, offset = [], 0
    rules = rules or [None] * len(spaces)
    for space, f, rule in zip(spaces, exact_fields, rules):
        out.append(l2_error(space, alpha[offset:offset + space.dof_count], t, f, rule))
        offset += space.dof_count
    return tuple(out)


def compute_eoc(errors, hs):
    """log(E_j / E_{j-1}) / log(h_j / h_{j-1}); None where undefined."""
    if len(errors) != len(hs):
        raise ValueError("errors and mesh sizes differ in length")
    out = []
    for j in range(1, len(errors)):
        e0, e1, h0, h1 = errors[j - 1], errors[j], hs[j - 1], hs[j]
        if None in (e0, e1) or min(e0, e1, h0, h1) <= 0 or h0 == h1:
            out.append(None)
        else:
            out.append(math.log(e1 / e0) / math.log(h1 / h0))
    return out


# ------------------------------------------------------------ study

def _build_level(cfg: StudyConfig, level: int):
    problem = get_problem(cfg.problem)
    k = cfg.order
    if cfg.problem == "surface":
        space = build_surface_space(sphere_mesh(level), k, problem.evolution)
        rule = make_quadrature(2, cfg.quadrature_degree)
        system = ScalarSystem(space, problem.data("surface"), rule)
        return system, space, (space,), (problem.exact["surface"],), (rule,)
    mesh = ball_mesh(level)
    bulk = build_bulk_space(mesh, k, problem.evolution)
    rule_b = make_quadrature(3, cfg.quadrature_degree)
    if cfg.problem == "bulk":
        system = ScalarSystem(bulk, problem.data("bulk"), rule_b)
        return system, bulk, (bulk,), (problem.exact["bulk"],), (rule_b,)
    bs = boundary_surface(mesh)
    surf = build_surface_space(bs.mesh, k, problem.evolution)
    trace = build_trace_map(bulk, surf, bs)
    rule_s = make_quadrature(2, cfg.quadrature_degree)
    system = CoupledSystem(bulk, surf, trace, problem.coupled_data(), rule_b, rule_s)
    return (system, bulk, (bulk, surf), (problem.exact["bulk"], problem.exact["surface"]),
            (rule_b, rule_s))


def steps_for_level(cfg: StudyConfig, level: int) -> tuple[float, int]:
    tau = cfg.tau0 * 2.0 ** (-(cfg.order + 1) * level)
    steps = max(1, int(round(cfg.final_time / tau)))
    return cfg.final_time / steps, steps


def run_level(cfg: StudyConfig, level: int, vtk_dir: Path | None = None) -> LevelRecord:
    system, main_space, spaces, exact, rules = _build_level(cfg, level)
    tau, steps = steps_for_level(cfg, level)
    rec = LevelRecord(level, main_space.mesh_size().h_max, tau, steps, system.size)
    callback = None
    if vtk_dir is not None and cfg.vtk_every:
        from .io import write_space_vtk

        def callback(state):
            if state.step_index % cfg.vtk_every == 0 or state.step_index == steps:
                off = 0
                for i, sp_ in enumerate(spaces):
                    write_space_vtk(vtk_dir / f"level{level}_part{i}_step{state.step_index:06d}.vtk",
                                    sp_, state.t, state.alpha[off:off + sp_.dof_count])
                    off += sp_.dof_count
    try:
        state = integrate(system, None, cfg.final_time, steps, cfg.solver, callback=callback)
    except EvolfemError as exc:
        log.warning("level %d failed: %s", level, exc)
        rec.failed = True
        rec.message = str(exc)
        return rec
    errs = l2_error_at_final_time(spaces if len(spaces) > 1 else spaces[0], state.alpha,
                                  cfg.final_time, exact if len(spaces) > 1 else exact[0],
                                  rules if len(spaces) > 1 else rules[0])
    if cfg.problem == "surface":
        rec.err_surf = errs
    elif cfg.problem == "bulk":
        rec.err_bulk = errs
    else:
        rec.err_bulk, rec.err_surf = errs
    rec.assembly_s = state.assembly_seconds
    rec.solve_s = state.solve_seconds
    rec.gmres_iters = state.gmres_iterations
    return rec


def _fill_eoc(report: ConvergenceReport):
    hs = report.column("h")
    for col, eoc_col in (("err_bulk", "eoc_bulk"), ("err_surf", "eoc_surf")):
        errs = report.column(col)
        if all(e is None for e in errs):
            continue
        for row, e in zip(report.rows[1:], compute_eoc(errs, hs)):
            setattr(row, eoc_col, e)


def run_study(cfg: StudyConfig, vtk_dir: Path | None = None) -> ConvergenceReport:
    report = ConvergenceReport(cfg.problem, cfg.order, metadata={
        "scheme": SCHEME_ID,
        "quadrature_degree": cfg.quadrature_degree,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "solver_tol": cfg.solver.relative_tolerance,
        "tau0": cfg.tau0,
        "final_time": cfg.final_time,
    })
    levels = range(cfg.min_level, cfg.max_level + 1)
    if cfg.threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            report.rows = list(pool.map(run_level, [cfg] * len(levels), levels))
    else:
        for level in levels:
            t0 = time.perf_counter()
            report.rows.append(run_level(cfg, level, vtk_dir))
            log.info("level %d done in %.1fs", level, time.perf_counter() - t0)
    _fill_eoc(report)
    return report


# ------------------------------------------------------------ output

def _fmt(x, fmt="{:.5e}", missing=""):
    return missing if x is None else fmt.format(x)


def report_csv(report: ConvergenceReport, timings: bool = True) -> str:
    """Fixed-column CSV.  With ``timings=False`` the wall-clock columns are
    left empty so that identical runs give identical bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([r.level, repr(r.h), repr(r.tau), r.steps, r.dofs,
                    _fmt(r.err_bulk, "{!r}"), _fmt(r.err_surf, "{!r}"),
                    _fmt(r.eoc_bulk, "{!r}"), _fmt(r.eoc_surf, "{!r}"),
                    f"{r.assembly_s:.3f}" if timings else "",
                    f"{r.solve_s:.3f}" if timings else "", r.gmres_iters])
    return buf.getvalue()


def report_table(report: ConvergenceReport) -> str:
    cols = ["h", "tau"]
    parts = []
    if any(e is not None for e in report.column("err_bulk")) or report.problem in ("bulk", "coupled"):
        parts.append(("err_bulk", "eoc_bulk", "L2(Omega(T)) error"))
    if any(e is not None for e in report.column("err_surf")) or report.problem in ("surface", "coupled"):
        parts.append(("err_surf", "eoc_surf", "L2(Gamma(T)) error"))
    header = cols + [p for _, _, lab in parts for p in (lab, "(eoc)")]
    lines = []
    for i, r in enumerate(report.rows):
        row = [_fmt(r.h), _fmt(r.tau)]
        for err, eoc, _ in parts:
            if r.failed:
                row += ["failed", "---"]
                continue
            row.append(_fmt(getattr(r, err)))
            e = getattr(r, eoc)
            row.append("---" if i == 0 or e is None else f"{e:.5f}")
        lines.append(row)
    widths = [max(len(h), *(len(l[c]) for l in lines)) if lines else len(h)
              for c, h in enumerate(header)]
    out = [f"# problem={report.problem} k={report.order} "
           f"scheme={report.metadata.get('scheme', '')} "
           f"quad={report.metadata.get('quadrature_degree', '')}"]
    out.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    out.append("-" * len(out[-1]))
    out += ["  ".join(c.rjust(w) for c, w in zip(l, widths)) for l in lines]
    return "\n".join(out) + "\n"


def report_json(report: ConvergenceReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def emit_report(report: ConvergenceReport, format: str = "table", path=None,
                timings: bool = True) -> str:
    if format not in FORMATS:
        raise ConfigurationError(f"unknown format {format!r}")
    if format == "csv":
        text = report_csv(report, timings)
    elif format == "json":
        text = report_json(report)
    else:
        text = report_table(report)
    if path is not None:
        Path(path).write_text(text)
    return text
