"""Command-line front end.

::

    iterblue sweep    --config exp.cfg [--out table.csv] [--trials N] [--seed S] [--deterministic]
    iterblue converge --config exp.cfg --sigma 1e-6 [...]
    iterblue estimate --config exp.cfg --seed S [--sigma 1e-6]

Exit status: 0 success, 2 configuration error, 3 numerical contract error,
4 divergence-rate failure (or a diverged single estimate), 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import math
import sys
from dataclasses import replace
from typing import TextIO

import numpy as np

from iterblue import __version__
from iterblue.config import format_config, parse_config
from iterblue.errors import ConfigError, DivergenceError, IterBlueError
from iterblue.estimators import IterationConfig, iterative_blue
from iterblue.simulation import MseReport, SweepConfig, convergence_curve, gen_scenario, mse_sweep

__all__ = ["emit_report", "main", "COLUMNS", "MAX_DIVERGENCE_RATE"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5

MAX_DIVERGENCE_RATE = 1e-3

COLUMNS = ("estimator", "sigma_n_sq_or_iter", "mse", "mc_stderr", "trials", "divergent")


def _fmt(x: float) -> str:
    # shortest scientific form that parses back to the same double
    if not math.isfinite(x):
        return str(x)
    for digits in range(17):
        text = f"{x:.{digits}e}"
        if float(text) == x:
            return text
    return f"{x:.16e}"


def emit_report(report: MseReport, sink: TextIO) -> None:
    """Write ``report`` as CSV preceded by ``# key = value`` metadata lines.

    Floats are written in the shortest scientific form that parses back to
    the identical double; iteration keys are written as integers.
    ``trials`` counts the trials that entered the mean, ``divergent`` the
    ones excluded.
    """
    for key, value in report.meta.items():
        sink.write(f"# {key} = {value}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in report.rows:
        key = str(r.key) if report.kind == "iteration" else _fmt(float(r.key))
        writer.writerow([r.estimator, key, _fmt(r.mse), _fmt(r.mc_stderr), r.trials, r.divergent])


def _meta(command: str, cfg: SweepConfig, deterministic: bool, extra: dict | None = None) -> dict:
    meta = {"command": command, "version": __version__}
    if not deterministic:
        meta["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    for line in format_config(cfg).splitlines():
        k, v = line.split(" = ", 1)
        meta[k] = v
    meta.update(extra or {})
    return meta


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iterblue", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value experiment file (defaults if omitted)")
        p.add_argument("--out", help="output file (stdout if omitted)")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n-iter", type=int, dest="n_iter")
        p.add_argument("--workers", type=int, default=1, help="threads across grid cells")
        p.add_argument("--deterministic", action="store_true", help="omit the timestamp line")

    common(sub.add_parser("sweep", help="MSE versus noise variance"))
    p = sub.add_parser("converge", help="MSE versus iteration at one noise variance")
    common(p)
    p.add_argument("--sigma", type=float, required=True)
    p = sub.add_parser("estimate", help="print the iterate trace of one scenario")
    common(p)
    p.add_argument("--sigma", type=float)
    return parser


def _load(args) -> SweepConfig:
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    cfg = parse_config(text)
    try:
        scen = cfg.scenario
        if args.seed is not None:
            scen = replace(scen, seed=args.seed)
        if getattr(args, "sigma", None) is not None:
            scen = replace(scen, sigma_n_sq=args.sigma)
        cfg = replace(cfg, scenario=scen)
        if args.trials is not None:
            cfg = replace(cfg, trials=args.trials)
        if args.n_iter is not None:
            cfg = replace(cfg, n_iter=args.n_iter)
        if args.command == "converge":
            cfg = replace(cfg, sigma_grid=(args.sigma,))
    except IterBlueError as exc:
        raise ConfigError(f"invalid override: {exc}") from exc
    return cfg


def _estimate(cfg: SweepConfig, sink: TextIO, meta: dict) -> int:
    s = gen_scenario(cfg.scenario)
    status = EXIT_OK
    try:
        trace = iterative_blue(s.problem, IterationConfig(cfg.n_iter))
    except DivergenceError as exc:
        trace, status = exc.trace, EXIT_DIVERGENCE
    for key, value in meta.items():
        sink.write(f"# {key} = {value}\n")
    n_x = cfg.scenario.n_x
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["iteration"] + [f"x{j + 1}" for j in range(n_x)] + ["sq_error"])
    writer.writerow(["true"] + [_fmt(v) for v in s.x_true] + [_fmt(0.0)])
    for k, x in enumerate(trace.estimates):
        err = float(np.mean((x - s.x_true) ** 2))
        writer.writerow([k] + [_fmt(v) for v in x] + [_fmt(err)])
    return status


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"iterblue: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"iterblue: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        meta = _meta(args.command, cfg, args.deterministic)
        if args.command == "estimate":
            report = None
        elif args.command == "sweep":
            report = mse_sweep(cfg, workers=args.workers)
        else:
            report = convergence_curve(cfg, workers=args.workers)
    except IterBlueError as exc:
        print(f"iterblue: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    try:
        sink = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
        try:
            if report is None:
                return _estimate(cfg, sink, meta)
            report.meta = meta | {
                "total_trials": str(report.total_trials),
                "total_divergent": str(report.total_divergent),
            }
            emit_report(report, sink)
        finally:
            if sink is not sys.stdout:
                sink.close()
    except OSError as exc:
        print(f"iterblue: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IterBlueError as exc:
        print(f"iterblue: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    rate = max((report.divergence_rate(n) for n in {r.estimator for r in report.rows}), default=0.0)
    if rate > MAX_DIVERGENCE_RATE:
        print(f"iterblue: divergence rate {rate:.3%} exceeds {MAX_DIVERGENCE_RATE:.1%}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
