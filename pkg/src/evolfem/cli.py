"""Command line entry point: ``evolfem --problem surface --order 2 ...``.

Exit codes: 0 success, 1 invalid configuration, 2 some level failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError
from .harness import FORMATS, StudyConfig, emit_report, run_study
from .problems import PROBLEM_IDS
from .solver import LinearSolverConfig

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2

# key -> converter, shared by flags and config files
_KEYS = {
    "problem": str,
    "order": int,
    "min_level": int,
    "max_level": int,
    "tau0": float,
    "final_time": float,
    "solver_tol": float,
    "quad_degree": int,
    "format": str,
    "out": str,
    "vtk_every": int,
    "threads": int,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes and
    underscores in keys are interchangeable."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _KEYS[key](val)
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: bad value {val!r} for {key}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="evolfem",
        description="Convergence studies for evolving surface and bulk finite elements.")
    p.add_argument("--config", metavar="PATH", help="key = value file; flags override it")
    p.add_argument("--problem", choices=PROBLEM_IDS)
    p.add_argument("--order", type=int, metavar="K")
    p.add_argument("--min-level", type=int, metavar="J0")
    p.add_argument("--max-level", type=int, metavar="J1")
    p.add_argument("--tau0", type=float, help="time step at level 0 (default 1.0)")
    p.add_argument("--final-time", type=float, help="default 1.0")
    p.add_argument("--solver-tol", type=float, help="GMRES relative tolerance (default 1e-10)")
    p.add_argument("--quad-degree", type=int, metavar="D",
                   help="quadrature degree (default 2k+2)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    p.add_argument("--vtk-every", type=int, metavar="N",
                   help="write VTK snapshots every N steps (next to --out)")
    p.add_argument("--threads", type=int, metavar="N", help="levels run in parallel")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> StudyConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _KEYS:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    for required in ("problem", "order"):
        if required not in values:
            raise ConfigurationError(f"missing required setting {required!r}")
    if "min_level" in values and "max_level" not in values:
        values["max_level"] = max(values["min_level"], 2)
    solver = LinearSolverConfig(relative_tolerance=values.pop("solver_tol", 1e-10))
    if values.get("vtk_every") is not None and values["vtk_every"] < 1:
        raise ConfigurationError("vtk_every must be >= 1")
    return StudyConfig(solver=solver, **values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigurationError, OSError) as exc:
        print(f"evolfem: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    vtk_dir = None
    if cfg.vtk_every:
        vtk_dir = Path(cfg.out).parent if cfg.out else Path.cwd()
        vtk_dir = vtk_dir / "vtk"
        vtk_dir.mkdir(parents=True, exist_ok=True)
    report = run_study(cfg, vtk_dir)
    text = emit_report(report, cfg.format, cfg.out)
    if cfg.out is None:
        sys.stdout.write(text)
    return EXIT_FAILED if report.any_failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
