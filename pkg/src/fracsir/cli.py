"""Command line front end: ``simulate``, ``equilibria``, ``verify``, ``sweep``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 failed
invariant check.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from fracsir.analysis import verify_history
from fracsir.config import ConfigError, PRESETS, RunConfig, ValidationError, parse_config
from fracsir.epidemics import (
    NoEndemicEquilibrium,
    disease_free_equilibrium,
    endemic_equilibrium,
    equilibrium_residuals,
    reproduction_number,
)
from fracsir.solver import HistoryBuffer, SimulationError, simulate, sup_distance

logger = logging.getLogger("fracsir")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4

TRAJECTORY_HEADER = ("k", "t", "n", "x", "S", "I", "R")
DIAGNOSTICS_HEADER = ("k", "G", "bound", "W", "deltaW", "dist")
SWEEP_HEADER = ("value", "R0", "final_dist_E0", "final_dist_Estar", "status")

SWEEP_AXES = (
    "alpha", "dt", "lam", "lambda", "beta", "gamma", "delta", "mu", "r",
    "d1", "d2", "d3", "w", "ic_S", "ic_I", "ic_R",
)


def fmt(value: float) -> str:
    """Shortest round-trip representation of a float."""
    return repr(float(value))


def _run(cfg: RunConfig) -> HistoryBuffer:
    return simulate(
        cfg.params,
        cfg.incidence_model,
        cfg.grid,
        cfg.initial_condition,
        cfg.alpha,
        window=cfg.window,
        tol=cfg.tol,
    )


def _endemic_or_none(cfg: RunConfig):
    try:
        return endemic_equilibrium(cfg.params, cfg.incidence_model)
    except NoEndemicEquilibrium:
        return None


def final_distances(cfg: RunConfig, hist: HistoryBuffer) -> tuple[float, float]:
    last = hist.data[-1:]
    d0 = float(sup_distance(last, disease_free_equilibrium(cfg.params))[0])
    estar = _endemic_or_none(cfg)
    dstar = float(sup_distance(last, estar)[0]) if estar is not None else math.nan
    return d0, dstar


# {{{ subcommands


def write_trajectory(path: Path, hist: HistoryBuffer, x: np.ndarray) -> int:
    rows = 0
    with open(path, "w", newline="") as fd:
        writer = csv.writer(fd, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        data = hist.data
        for k in range(len(hist)):
            t = fmt(k * hist.dt)
            for n in range(hist.nodes):
                writer.writerow(
                    (k, t, n, fmt(x[n]), fmt(data[k, 0, n]), fmt(data[k, 1, n]), fmt(data[k, 2, n]))
                )
                rows += 1
    return rows


def run_simulate(cfg: RunConfig, out: Path, stdout: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())

    hist = _run(cfg)
    write_trajectory(out / "trajectory.csv", hist, cfg.grid.x)

    d0, dstar = final_distances(cfg, hist)
    summary = f"steps={hist.k} dist_E0={fmt(d0)}"
    if not math.isnan(dstar):
        summary += f" dist_Estar={fmt(dstar)}"
    if hist.convergence is not None:
        summary += f" converged_at={hist.convergence.step}"
    print(summary, file=stdout)
    return EXIT_OK


def run_equilibria(cfg: RunConfig, stdout: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    p, f = cfg.params, cfg.incidence_model
    e0 = disease_free_equilibrium(p)
    print(f"R0 = {reproduction_number(p, f):.6g}", file=stdout)
    print(f"E0 = ({e0.S:.6g}, {e0.I:.6g}, {e0.R:.6g})", file=stdout)

    estar = _endemic_or_none(cfg)
    if estar is None:
        print("E* = none: R0 <= 1", file=stdout)
    else:
        res = np.abs(equilibrium_residuals(p, f, estar)).max()
        print(f"E* = ({estar.S:.6g}, {estar.I:.6g}, {estar.R:.6g})", file=stdout)
        print(f"E* residual = {res:.3e}", file=stdout)
    return EXIT_OK


def run_verify(
    cfg: RunConfig,
    out: Path,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
    *,
    hist: HistoryBuffer | None = None,
) -> int:
    """Simulate (unless *hist* is given), write diagnostics and check every
    invariant."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    out.mkdir(parents=True, exist_ok=True)
    if hist is None:
        hist = _run(cfg)

    p, f = cfg.params, cfg.incidence_model
    report = verify_history(hist, p, f, slack=cfg.slack)

    with open(out / "diagnostics.csv", "w", newline="") as fd:
        writer = csv.writer(fd, lineterminator="\n")
        writer.writerow(DIAGNOSTICS_HEADER)
        bound = fmt(report.mass.bound)
        if report.decay is not None:
            which = report.decay.which
            for rec in report.decay.records:
                W, dW = (rec.W_dfe, rec.dW_dfe) if which == "dfe" else (rec.W_ee, rec.dW_ee)
                dist = rec.dist_E0 if which == "dfe" else rec.dist_Estar
                writer.writerow((rec.k, fmt(rec.G), bound, fmt(W), fmt(dW), fmt(dist)))
        else:
            for k, G in enumerate(report.mass.G):
                writer.writerow((k, fmt(G), bound, "nan", "nan", "nan"))

    for check in report.checks:
        verdict = "PASS" if check.passed else "FAIL"
        where = "" if check.step is None else f" at step {check.step}"
        print(f"{verdict} {check.name}{where}: {check.detail}", file=stdout)

    for check in report.failed():
        print(f"invariant violated: {check.name} at step {check.step}", file=stderr)

    return EXIT_OK if report.ok else EXIT_INVARIANT


def _sweep_one(cfg: RunConfig, axis: str, value: float) -> tuple[str, ...]:
    try:
        run_cfg = cfg.replace(**{"lam" if axis == "lambda" else axis: value})
        r0 = reproduction_number(run_cfg.params, run_cfg.incidence_model)
        hist = _run(run_cfg)
        d0, dstar = final_distances(run_cfg, hist)
        return (fmt(value), fmt(r0), fmt(d0), fmt(dstar), "ok")
    except ConfigError as exc:
        return (fmt(value), "nan", "nan", "nan", f"config error: {exc}")
    except SimulationError as exc:
        return (fmt(value), "nan", "nan", "nan", f"numerical failure: {exc}")


def run_sweep(
    cfg: RunConfig,
    axis: str,
    values: Sequence[float],
    out: Path,
    *,
    workers: int | None = None,
) -> int:
    """One independent run per value; rows keep the order of *values*."""
    if axis not in SWEEP_AXES:
        raise ValidationError("axis", f"cannot sweep {axis!r}; choose from {SWEEP_AXES}")

    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.workers if workers is None else workers
    values = [float(v) for v in values]

    if workers <= 1 or len(values) <= 1:
        rows = [_sweep_one(cfg, axis, v) for v in values]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(values))) as pool:
            rows = list(pool.map(_sweep_one, [cfg] * len(values), [axis] * len(values), values))

    with open(out / "sweep.csv", "w", newline="") as fd:
        writer = csv.writer(fd, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        writer.writerows(rows)

    return EXIT_OK


# }}}

# {{{ argument parsing


def _parse_values(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracsir",
        description="Fractional reaction-diffusion SIR solver and verifier.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--steps", type=int)
    common.add_argument("--alpha", type=float)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run and write trajectory.csv")
    sub.add_parser("equilibria", parents=[common], help="print R0 and equilibria")
    sub.add_parser("verify", parents=[common], help="run and check all invariants")
    sweep = sub.add_parser("sweep", parents=[common], help="one run per parameter value")
    sweep.add_argument("--axis", required=True)
    sweep.add_argument("--values", required=True, help="comma separated list")
    sweep.add_argument("--workers", type=int)

    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ValidationError("config", str(exc)) from None

    overrides = {"steps": args.steps, "alpha": args.alpha}
    if args.out is not None:
        overrides["out"] = str(args.out)
    return parse_config(text, preset=args.preset, **overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        cfg = load_config(args)
        out = Path(cfg.out)

        if args.command == "simulate":
            return run_simulate(cfg, out)
        if args.command == "equilibria":
            return run_equilibria(cfg)
        if args.command == "verify":
            return run_verify(cfg, out)
        if args.command == "sweep":
            values = _parse_values(args.values)
            return run_sweep(cfg, args.axis, values, out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        step = "?" if exc.step is None else exc.step
        print(f"numerical failure at step {step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


# }}}


if __name__ == "__main__":
    sys.exit(main())
