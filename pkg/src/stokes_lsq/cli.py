"""Command-line front end.

``stokes-lsq run --case ex1 --W 2..6 --out ex1.csv`` solves a built-in case
for each degree and writes the error table plus ``ex1_plot.csv`` (W against
log10 of each error). Exit status: 0 success, 2 config error, 3 solver
non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

from .bench import get_case, make_report, setup_case, solve_setup
from .config import ConfigError, ExperimentConfig, build_problem, load_config, parse_degrees

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3
COLUMNS = ("case", "W", "err_u_H1", "err_p_L2", "err_c_L2", "iterations", "wall_time")
ERROR_COLUMNS = ("err_u_H1", "err_p_L2", "err_c_L2")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6e}"
    return str(v)


def write_table(path, reports, timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in reports:
            row = r.row()
            if not timing:
                row["wall_time"] = ""
            w.writerow([_fmt(row[c]) for c in COLUMNS])


def write_plot_data(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["W"] + [f"log10_{c}" for c in ERROR_COLUMNS])
        for r in reports:
            vals = [getattr(r, c) for c in ERROR_COLUMNS]
            w.writerow([r.W] + ["" if not (v > 0) else f"{math.log10(v):.6f}" for v in vals])


def plot_path_for(csv_path: str) -> str:
    p = Path(csv_path)
    return str(p.with_name(f"{p.stem}_plot.csv"))


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Execute a validated config; returns the exit status."""
    stream = stream or sys.stdout
    setup = setup_case(get_case(cfg.case)) if cfg.case is not None else build_problem(cfg.problem)
    reports = []
    status = EXIT_OK
    for W in cfg.W:
        hist = None
        if cfg.output.history:
            hist = cfg.output.history.replace("{W}", str(W)) if "{W}" in cfg.output.history \
                else str(Path(cfg.output.history).with_suffix("")) + f"_W{W}.csv"
        sol = solve_setup(setup, W, cfg.solver_config(), history_csv=hist)
        rep = make_report(setup, sol)
        reports.append(rep)
        flag = "" if rep.converged else "  NOT CONVERGED"
        print(f"{setup.label} W={W}: err_u_H1={_fmt(rep.err_u_H1)} err_p_L2={_fmt(rep.err_p_L2)} "
              f"err_c_L2={_fmt(rep.err_c_L2)} itr={rep.iterations}{flag}", file=stream)
        if not rep.converged:
            status = EXIT_NONCONVERGED
    if cfg.output.csv:
        write_table(cfg.output.csv, reports, cfg.output.timing)
        write_plot_data(cfg.output.plot or plot_path_for(cfg.output.csv), reports)
    elif cfg.output.plot:
        write_plot_data(cfg.output.plot, reports)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stokes-lsq", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve a built-in case or a config file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--case", help="built-in case id (ex1 .. ex8)")
    src.add_argument("--config", help="JSON experiment config")
    r.add_argument("--W", help="degree, list '2,4,6' or range '2..6' (overrides the config)")
    r.add_argument("--tol", type=float, help="relative PCG tolerance (overrides the config)")
    r.add_argument("--max-iter", type=int, help="PCG iteration cap (overrides the config)")
    r.add_argument("--out", help="CSV output path; plot data goes to <stem>_plot.csv")
    r.add_argument("--history", help="residual history CSV per W ('{W}' is substituted)")
    r.add_argument("--threads", type=int, help="BLAS thread count")
    r.add_argument("--no-timing", action="store_true", help="leave wall_time empty for reproducible CSVs")
    return ap


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
    else:
        key = args.case.lower().replace("-", "")
        try:
            get_case(key)
        except KeyError as exc:
            raise ConfigError("case", exc.args[0]) from None
        cfg = ExperimentConfig(case=key)
    if args.W is not None:
        text = args.W
        cfg = replace(cfg, W=parse_degrees(int(text) if text.isdigit() else text, "--W"))
    if args.tol is not None:
        if not 0.0 < args.tol < 1.0:
            raise ConfigError("--tol", "must lie in (0, 1)")
        cfg = replace(cfg, rel_tolerance=args.tol)
    if args.max_iter is not None:
        if args.max_iter < 1:
            raise ConfigError("--max-iter", "must be positive")
        cfg = replace(cfg, max_iterations=args.max_iter)
    out = cfg.output
    if args.out:
        out = replace(out, csv=args.out, plot=None)
    if args.history:
        out = replace(out, history=args.history)
    if args.no_timing:
        out = replace(out, timing=False)
    return replace(cfg, output=out)


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None and args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    with _thread_limit(args.threads):
        return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
