"""Command-line driver: ``rdro solve | sweep | verify``.

Exit status is 0 when every solve converged (or every check passed), 2
when an outer loop stopped at its iteration cap, and 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, RunConfig, load_json, merge, validate
from .errors import RDROError
from .solver import SolveReport, solve_constrained, solve_penalized, theta_sweep

log = logging.getLogger("rdro")

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2
FLOAT_FORMAT = "%.17g"


def _fmt(v) -> str:
    return FLOAT_FORMAT % v


def write_matrix(path: Path, a) -> None:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in a:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trace(path: Path, report: SolveReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective", "residual"])
        for row in report.trace:
            w.writerow([row.iteration, _fmt(row.objective), _fmt(row.step_residual)])


def report_dict(report: SolveReport) -> dict:
    return {
        "theta": report.theta,
        "eta": report.eta,
        "penalized_value": report.penalized_value,
        "constrained_value": report.constrained_value,
        "converged": report.converged,
        "iterations": report.iterations,
        "inner_iterations": report.inner_iterations,
        "runtime_ms": report.runtime_ms,
        "x_star": np.asarray(report.x_star).tolist(),
        "plan": np.asarray(report.plan).tolist(),
    }


def write_report(out: Path, report: SolveReport, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    body = report_dict(report) | {"config": cfg.as_dict()}
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2)
        fh.write("\n")
    write_trace(out / "trace.csv", report)
    write_matrix(out / "plan.csv", report.plan)
    write_matrix(out / "x_star.csv", report.x_star)


def _threads(n: int) -> int:
    return (os.cpu_count() or 1) if n == 0 else max(1, n)


def load_config(args) -> RunConfig:
    if args.preset is None and args.config is None:
        raise RDROError("one of --config or --preset is required")
    raw = {}
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise RDROError(f"unknown preset {args.preset!r}; known: {', '.join(PRESETS)}")
        raw = PRESETS[args.preset]
    if args.config is not None:
        raw = merge(raw, load_json(args.config))
    return validate(raw, env_seed=os.environ.get("RDRO_SEED"))


def cmd_solve(args) -> int:
    cfg = load_config(args)
    if cfg.target == "theta_grid":
        raise RDROError("solver.theta_grid: use the 'sweep' command for a theta grid")
    outer, scaling = cfg.outer_config(), cfg.scaling_config()
    if cfg.target == "theta":
        report = solve_penalized(cfg.problem_template(), None, outer, scaling)
    else:
        report = solve_constrained(cfg.problem_template(), cfg.solver["eta_target"],
                                   tuple(cfg.solver["theta_bracket"]), outer, scaling,
                                   dual_tolerance=cfg.solver["dual_tolerance"])
    write_report(Path(args.out), report, cfg)
    print(f"theta={report.theta:.6g} eta={report.eta:.6g} J_p={report.penalized_value:.10g} "
          f"J_c={report.constrained_value:.10g} iterations={report.iterations} "
          f"converged={report.converged}")
    return EXIT_OK if report.converged else EXIT_CAP


DUALITY_COLUMNS = ["theta", "eta", "value_penalized", "value_constrained", "iterations", "runtime_ms"]


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    if cfg.target != "theta_grid":
        raise RDROError("solver.theta_grid: the sweep command needs a theta grid")
    reports = theta_sweep(cfg.problem_template(), cfg.solver["theta_grid"], cfg.outer_config(),
                          cfg.scaling_config(), max_workers=_threads(args.threads))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "duality.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DUALITY_COLUMNS)
        for r in reports:
            w.writerow([_fmt(r.theta), _fmt(r.eta), _fmt(r.penalized_value),
                        _fmt(r.constrained_value), r.iterations, _fmt(r.runtime_ms)])
    for r in reports:
        print(f"theta={r.theta:.6g} eta={r.eta:.6g} J_p={r.penalized_value:.10g} "
              f"J_c={r.constrained_value:.10g} converged={r.converged}")
    return EXIT_OK if all(r.converged for r in reports) else EXIT_CAP


def cmd_verify(args) -> int:
    from .verify import SUITES

    if args.suite not in SUITES:
        raise RDROError(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}")
    kwargs = {"max_workers": _threads(args.threads)} if args.suite == "duality" else {}
    checks = SUITES[args.suite](**kwargs)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration (schema 1)")
        p.add_argument("--preset", help="built-in configuration, e.g. investment73")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--threads", type=int, default=1, help="worker processes, 0 = auto")

    common(sub.add_parser("solve", help="solve one penalized or constrained problem"))
    common(sub.add_parser("sweep", help="solve across a theta grid and write duality.csv"))
    verify = sub.add_parser("verify", help="run a self-check suite")
    verify.add_argument("suite", help="inner-oracle, projection, counterexample or duality")
    verify.add_argument("--threads", type=int, default=1, help="worker processes, 0 = auto")
    return parser


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (RDROError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
