"""Command line: ``vqexposure {grid,exposure,portfolio,sweep}``.

Exit status is 0 on success, 2 on a config or usage error and 1 when any
method failed (its columns are written as FAILED, the rest still run).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import runner
from .quantizer import build_grid, save_grid, stationarity_residual

log = logging.getLogger("vqexposure")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", help="output directory (overrides config 'output')")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (overrides methods.mc.seed)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it")
    p.add_argument("--discount", action="store_true", help="report discounted exposures")
    p.add_argument("--grid-cache", help="directory of cached quantization grids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqexposure", description="Expected exposure by optimal quantization")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("grid", help="build an optimal quantization grid of N(0,1)")
    g.add_argument("-n", "--size", type=int, required=True)
    g.add_argument("--tol", type=float, default=1e-10)
    g.add_argument("--out", required=True, help="grid file to write")

    for name, text in (
        ("exposure", "single-option tables per (spot, vol)"),
        ("portfolio", "netting-set tables per (spot, vol)"),
        ("sweep", "long-format rows over the (spot, vol) grid"),
    ):
        _common(sub.add_parser(name, help=text))
    return parser


def _load(args) -> runner.RunConfig:
    config = runner.load_config(args.config)
    changes = {}
    if args.out:
        changes["output"] = Path(args.out)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.discount:
        changes["discount"] = True
    if args.grid_cache:
        changes["grid_cache"] = Path(args.grid_cache)
    elif config.grid_cache is None:
        changes["grid_cache"] = Path(changes.get("output", config.output)) / "grids"
    if args.jobs < 1:
        raise runner.ConfigError("--jobs must be at least 1")
    return replace(config, **changes)


def _report_failures(cells) -> int:
    status = 0
    for cell in cells:
        for name, why in cell.failures.items():
            log.error("S=%g vol=%g method %s failed: %s", cell.spot, cell.vol, name, why)
            status = 1
    return status


def cmd_grid(args) -> int:
    if args.size < 1:
        raise runner.ConfigError("--size must be at least 1")
    grid = build_grid(args.size, tol=args.tol)
    save_grid(grid, args.out)
    print(runner.dumps_grid_summary(grid, stationarity_residual(grid.points)))
    return 0


def cmd_tables(args) -> int:
    config = _load(args)
    if args.command == "exposure" and config.is_portfolio:
        raise runner.ConfigError("config key 'target': 'exposure' needs an option target, use 'portfolio'")
    if args.command == "portfolio" and not config.is_portfolio:
        raise runner.ConfigError("config key 'target': 'portfolio' needs a portfolio target")
    cells = runner.run(config, jobs=args.jobs)
    for path in runner.write_tables(cells, config, args.command, config.output):
        log.info("wrote %s", path)
    return _report_failures(cells)


def cmd_sweep(args) -> int:
    config = _load(args)
    cells = runner.run(config, jobs=args.jobs)
    rows = runner.sweep_rows(cells, config)
    config.output.mkdir(parents=True, exist_ok=True)
    for suffix, raw in (("", False), ("-raw", True)):
        path = config.output / f"sweep{suffix}.csv"
        path.write_text(runner.render_sweep(rows, raw))
        log.info("wrote %s", path)
    return _report_failures(cells)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"grid": cmd_grid, "exposure": cmd_tables, "portfolio": cmd_tables, "sweep": cmd_sweep}[args.command]
    try:
        return handler(args)
    except runner.ConfigError as exc:
        print(f"vqexposure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
