"""Command-line runner: ``pnlbleed run CONFIG`` and ``pnlbleed list``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import registry
from .config import ConfigError, RunConfig, load_config
from .errors import PnlBleedError

SCHEMA_VERSION = 1
RESULTS_FILE = "results.json"
CSV_FILE = "pnl_paths.csv"
PNL_FIGURE = "pnl_paths.png"
TAU_FIGURE = "tau_estimates.png"


def _finite_or_none(value):
    # JSON has no inf/nan; an infinite SE ratio (zero-variance estimator) becomes null.
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite_or_none(v) for v in value]
    return value


def results_document(cfg: RunConfig, results: dict, elapsed: float) -> dict:
    mc = cfg.mc
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "params": cfg.params,
        "mc": {"n_paths": mc.n_paths, "n_steps": mc.n_steps, "seed": mc.seed,
               "antithetic": mc.antithetic},
        "results": _finite_or_none(results),
        "timing": {"wall_seconds": elapsed},
    }


def write_pnl_csv(path: Path, times, cum_pnl) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path_id,t,cum_pnl\n")
        for pid, row in enumerate(cum_pnl):
            for t, v in zip(times, row):
                fh.write(f"{pid},{float(t)!r},{float(v)!r}\n")


def run_config(cfg: RunConfig, output_dir: Path, threads: int | None = None,
               figures: bool = True) -> dict:
    """Run one experiment and write its artifacts; returns the results document."""
    experiment = registry.get(cfg.experiment)
    mc = replace(cfg.mc, workers=threads or os.cpu_count() or 1)
    start = time.perf_counter()
    out = experiment.runner(cfg.params, mc)
    elapsed = time.perf_counter() - start

    output_dir.mkdir(parents=True, exist_ok=True)
    doc = results_document(cfg, out.results, elapsed)
    with open(output_dir / RESULTS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")

    if out.pnl is not None:
        write_pnl_csv(output_dir / CSV_FILE, out.pnl.times, out.pnl.cum_pnl)
        if figures:
            from .plotting import plot_pnl_paths
            plot_pnl_paths(out.pnl.times, out.pnl.cum_pnl, output_dir / PNL_FIGURE,
                           mean_terminal=out.pnl.terminal.mean, title=cfg.experiment)
    if out.tau_table is not None and figures:
        from .plotting import plot_tau_estimates
        plot_tau_estimates(*out.tau_table, output_dir / TAU_FIGURE)
    return doc


def _cmd_list(_args) -> int:
    for name, description, source in registry.list_experiments():
        print(f"{name:<20} {description} [{source}]")
    return 0


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, registry.defaults_for)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.output_dir:
        output_dir = Path(args.output_dir)
    elif cfg.output_dir is not None:
        output_dir = cfg.output_dir
    else:
        output_dir = Path("results") / cfg.experiment
    try:
        doc = run_config(cfg, output_dir, threads=args.threads, figures=not args.no_figures)
    except (PnlBleedError, ValueError) as exc:
        print(f"error: experiment {cfg.experiment!r} failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(doc["results"], indent=2))
    print(f"wrote {output_dir / RESULTS_FILE}", file=sys.stderr)
    return 0


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnlbleed",
                                     description="Pricing adjustments as discounted P&L bleeds")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML config")
    run.add_argument("config")
    run.add_argument("--threads", type=_positive_int, default=None,
                     help="worker threads (results do not depend on this)")
    run.add_argument("--output-dir", default=None, help="overrides output_dir in the config")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    run.set_defaults(func=_cmd_run)

    lst = sub.add_parser("list", help="list available experiments")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
