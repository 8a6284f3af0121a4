"""Experiment runner behind the command line: config parsing and table assembly.

A run config is a JSON object::

    {
      "target": {"option": {"kind": "call", "strike": 100, "maturity": 1}}
                | {"portfolio": "portfolios/netting10.txt"},
      "spots": [110, 100, 90],
      "vols": [0.15, 0.25, 0.30],
      "rate": 0.03,
      "buckets": "standard" | [t1, t2, ...] | {"times": [...], "labels": [...]},
      "methods": {
        "analytic": {},
        "numerical": {"N": 1000, "z_max": 4.0},
        "quantization": {"N": 1000},
        "tree": {"N": 100, "prune_z": null},
        "mc": {"N": 1000, "seed": 1592118496, "mode": "pds"},
        "sobol": {"N": 1000},
        "benchmark": {"N": 1000000}
      },
      "collateral": 0.0,
      "discount": false,
      "output": "out",
      "grid_cache": "out/grids"
    }

Each table is computed per (spot, vol) cell. Cells are independent, so they
can be farmed out to worker processes without changing a single output byte.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import exposure as ex
from .market import BucketGrid, MarketParams, OptionSpec, load_portfolio, standard_buckets
from .quantizer import QuantizerGrid, build_grid, load_grid, save_grid
from .sampling import DEFAULT_SEED, NormalStream

SINGLE_METHODS = ("analytic", "numerical", "quantization", "tree", "mc", "sobol")
PORTFOLIO_METHODS = ("benchmark", "quantization", "tree", "mc", "sobol")
DEFAULT_SIZES = {"numerical": 1000, "quantization": 1000, "tree": 100, "mc": 1000, "sobol": 1000, "benchmark": 10**6}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    target: OptionSpec | tuple[OptionSpec, ...]
    spots: list[float]
    vols: list[float]
    rate: float
    buckets: BucketGrid
    methods: dict[str, dict[str, Any]]
    collateral: float = 0.0
    discount: bool = False
    output: Path = Path("out")
    grid_cache: Path | None = None
    seed: int = DEFAULT_SEED

    @property
    def is_portfolio(self) -> bool:
        return not isinstance(self.target, OptionSpec)

    def size(self, method: str) -> int:
        return int(self.methods[method].get("N", DEFAULT_SIZES[method]))


def _need(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"config key '{key}': {message}")


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    """Validate a JSON run config; errors name the offending key path."""
    base_dir = Path(base_dir)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _need(isinstance(raw, dict), "<root>", "must be a JSON object")

    target_raw = raw.get("target", {"option": {"kind": "call", "strike": 100.0, "maturity": 1.0}})
    _need(isinstance(target_raw, dict) and len(target_raw) == 1, "target", "give exactly one of 'option' or 'portfolio'")
    if "option" in target_raw:
        o = target_raw["option"]
        try:
            target = OptionSpec(
                o.get("kind", "call"), float(o["strike"]), float(o.get("maturity", 1.0)),
                o.get("side", "buy"), float(o.get("quantity", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"config key 'target.option': {exc}") from None
    elif "portfolio" in target_raw:
        path = Path(target_raw["portfolio"])
        path = path if path.is_absolute() else base_dir / path
        _need(path.exists(), "target.portfolio", f"file {path} not found")
        try:
            target = tuple(load_portfolio(path))
        except ValueError as exc:
            raise ConfigError(f"config key 'target.portfolio' ({path}): {exc}") from None
        _need(len(target) > 0, "target.portfolio", "portfolio is empty")
    else:
        raise ConfigError("config key 'target': give exactly one of 'option' or 'portfolio'")

    spots = raw.get("spots", [110.0, 100.0, 90.0])
    vols = raw.get("vols", [0.15, 0.25, 0.30])
    for key, seq in (("spots", spots), ("vols", vols)):
        _need(isinstance(seq, list) and len(seq) > 0, key, "must be a non-empty list")
        _need(all(isinstance(v, (int, float)) and v > 0 for v in seq), key, "entries must be positive numbers")

    b = raw.get("buckets", "standard")
    try:
        if b == "standard":
            buckets = standard_buckets()
        elif isinstance(b, dict):
            buckets = BucketGrid(tuple(b["times"]), tuple(b["labels"]) if "labels" in b else None)
        else:
            buckets = BucketGrid(tuple(b))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config key 'buckets': {exc}") from None

    methods = raw.get("methods")
    _need(isinstance(methods, dict) and len(methods) > 0, "methods", "at least one method is required")
    allowed = PORTFOLIO_METHODS if isinstance(target, tuple) else SINGLE_METHODS
    for name, opts in methods.items():
        _need(name in allowed, f"methods.{name}", f"unknown method; choose from {', '.join(allowed)}")
        _need(isinstance(opts, dict), f"methods.{name}", "must be an object")
        if "N" in opts:
            _need(isinstance(opts["N"], int) and opts["N"] >= 1, f"methods.{name}.N", "must be a positive integer")
    if "mc" in methods:
        _need(methods["mc"].get("N", 2) >= 2, "methods.mc.N", "Monte Carlo needs at least 2 paths")
        _need(methods["mc"].get("mode", "pds") in (ex.PDS, ex.DJS), "methods.mc.mode", "must be 'pds' or 'djs'")

    collateral = raw.get("collateral", 0.0)
    _need(isinstance(collateral, (int, float)) and collateral >= 0, "collateral", "must be a non-negative number")
    rate = raw.get("rate", 0.03)
    _need(isinstance(rate, (int, float)), "rate", "must be a number")

    out = Path(raw.get("output", "out"))
    cache = raw.get("grid_cache")
    return RunConfig(
        target=target,
        spots=[float(s) for s in spots],
        vols=[float(v) for v in vols],
        rate=float(rate),
        buckets=buckets,
        methods={k: dict(v) for k, v in methods.items()},
        collateral=float(collateral),
        discount=bool(raw.get("discount", False)),
        output=out if out.is_absolute() else base_dir / out,
        grid_cache=None if cache is None else (Path(cache) if Path(cache).is_absolute() else base_dir / cache),
        seed=int(methods.get("mc", {}).get("seed", DEFAULT_SEED)),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


def cached_grid(n: int, cache_dir: Path | None) -> QuantizerGrid:
    """Optimal grid of size n, read from / written to ``cache_dir`` when given."""
    if cache_dir is None:
        return build_grid(n)
    path = Path(cache_dir) / f"grid_N{n:07d}.txt"
    if path.exists():
        return load_grid(path)
    grid = build_grid(n)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_grid(grid, path)
    return grid


@dataclass
class CellResult:
    spot: float
    vol: float
    profiles: dict[str, ex.ExposureProfile] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    benchmark: str = "analytic"


def run_cell(config: RunConfig, spot: float, vol: float, cell_index: int, grids: dict[int, QuantizerGrid]) -> CellResult:
    task = ex.ExposureTask(config.target, MarketParams(spot, config.rate, vol), config.buckets,
                           config.collateral, config.discount)
    res = CellResult(spot, vol, benchmark="benchmark" if config.is_portfolio else "analytic")
    k = len(config.buckets)

    def attempt(name, fn):
        try:
            res.profiles[name] = fn()
        except Exception as exc:  # a failed method marks its column, the rest still runs
            res.failures[name] = f"{type(exc).__name__}: {exc}"

    methods = config.methods
    if config.is_portfolio:
        attempt("benchmark", lambda: ex.ee_sobol(task, config.size("benchmark") if "benchmark" in methods
                                                 else DEFAULT_SIZES["benchmark"]))
    else:
        attempt("analytic", lambda: ex.ee_analytic(task))
    if "numerical" in methods:
        attempt("numerical", lambda: ex.ee_numerical(task, config.size("numerical"),
                                                     float(methods["numerical"].get("z_max", 4.0))))
    if "quantization" in methods:
        attempt("quantization", lambda: ex.ee_quantized_djs(task, grids[config.size("quantization")]))
    if "tree" in methods:
        prune = methods["tree"].get("prune_z")
        attempt("tree", lambda: ex.ee_quantized_tree(task, grids[config.size("tree")], prune_z=prune))
    if "mc" in methods:
        stream = NormalStream.pseudo(config.seed, k).substream(cell_index)
        attempt("mc", lambda: ex.ee_mc(task, config.size("mc"), methods["mc"].get("mode", ex.PDS), stream))
    if "sobol" in methods:
        attempt("sobol", lambda: ex.ee_sobol(task, config.size("sobol"), sample_stderr=config.is_portfolio))
    return res


def run(config: RunConfig, jobs: int = 1) -> list[CellResult]:
    """Run every (spot, vol) cell; output order never depends on ``jobs``."""
    sizes = {config.size(m) for m in ("quantization", "tree") if m in config.methods}
    grids = {n: cached_grid(n, config.grid_cache) for n in sorted(sizes)}
    cells = [(s, v) for s in config.spots for v in config.vols]
    if jobs <= 1 or len(cells) == 1:
        return [run_cell(config, s, v, i, grids) for i, (s, v) in enumerate(cells)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_cell, config, s, v, i, grids) for i, (s, v) in enumerate(cells)]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# tables


def _fmt(x, raw: bool) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if raw:
        return repr(x)
    text = f"{x:.4f}"
    return "0.0000" if text == "-0.0000" else text


def table_rows(cell: CellResult, config: RunConfig) -> tuple[list[str], list[list]]:
    """Header and rows (buckets then EPE) for one cell's table."""
    bench_name = cell.benchmark
    bench = cell.profiles.get(bench_name)
    header = ["bucket", f"{bench_name}_ee"]
    columns = []  # (header names, per-bucket values, epe values)
    order = SINGLE_METHODS[1:] if not config.is_portfolio else PORTFOLIO_METHODS[1:]
    k = len(config.buckets)
    for name in order:
        if name not in config.methods:
            continue
        prof = cell.profiles.get(name)
        with_rsd = name == "mc" or (name == "sobol" and config.is_portfolio)
        names = [f"{name}_ee", f"{name}_eps"] + ([f"{name}_rsd"] if with_rsd else [])
        if prof is None or bench is None:
            failed = ["FAILED"] * len(names)
            columns.append((names, [failed] * k, failed))
            continue
        m = ex.error_metrics(prof, bench)
        per = []
        for j in range(k):
            row = [prof.ee[j], m.eps[j]]
            if with_rsd:
                row.append(m.rsd[j] if m.rsd is not None else None)
            per.append(row)
        epe = [prof.epe, m.epe_eps] + ([m.epe_rsd] if with_rsd else [])
        columns.append((names, per, epe))
    for names, _, _ in columns:
        header += names
    rows = []
    for j, label in enumerate(config.buckets.labels):
        row = [label, bench.ee[j] if bench is not None else "FAILED"]
        for _, per, _ in columns:
            row += per[j]
        rows.append(row)
    epe_row = ["EPE", bench.epe if bench is not None else "FAILED"]
    for _, _, epe in columns:
        epe_row += epe
    rows.append(epe_row)
    return header, rows


def render_csv(header, rows, raw: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row[0]] + [_fmt(x, raw) for x in row[1:]])
    return buf.getvalue()


def cell_stem(prefix: str, spot: float, vol: float) -> str:
    return f"{prefix}_S{spot:g}_v{vol * 100:g}"


def write_tables(cells: list[CellResult], config: RunConfig, prefix: str, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for cell in cells:
        header, rows = table_rows(cell, config)
        stem = cell_stem(prefix, cell.spot, cell.vol)
        for suffix, raw in (("", False), ("-raw", True)):
            path = out_dir / f"{stem}{suffix}.csv"
            path.write_text(render_csv(header, rows, raw))
            written.append(path)
    return written


def sweep_rows(cells: list[CellResult], config: RunConfig) -> list[list]:
    """Long-format rows (spot, vol, method, bucket, ee, eps, rsd), buckets only."""
    rows = []
    for cell in cells:
        bench = cell.profiles.get(cell.benchmark)
        for name, prof in cell.profiles.items():
            if name == cell.benchmark:
                continue
            if bench is None:
                continue
            m = ex.error_metrics(prof, bench)
            for j, label in enumerate(config.buckets.labels):
                rsd = m.rsd[j] if m.rsd is not None else None
                rows.append([cell.spot, cell.vol, name, label, prof.ee[j], m.eps[j], rsd])
    return rows


def render_sweep(rows, raw: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["spot", "vol", "method", "bucket", "ee", "eps", "rsd"])
    for s, v, name, label, ee, eps, rsd in rows:
        w.writerow([f"{s:g}", f"{v:g}", name, label, _fmt(ee, raw), _fmt(eps, raw), _fmt(rsd, raw)])
    return buf.getvalue()


def dumps_grid_summary(grid: QuantizerGrid, residual: float) -> str:
    return json.dumps({"N": grid.size, "distortion": grid.distortion, "stationarity_residual": residual})


def as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)
