"""Exposure profiles (EE, EPE, EEE, EEPE, PFE) and the estimators that produce them.

Every estimator returns an :class:`ExposureProfile` over the task's bucket
grid. The quantized estimators are deterministic; the Monte Carlo ones carry
per-bucket standard errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .gaussnum import INV_SQRT_2PI
from .market import BucketGrid, MarketParams, OptionSpec, bs_price, portfolio_mtm, underlying_at
from .quantizer import QuantizerGrid, TransitionMatrix, tree_transitions
from .sampling import SOBOL, NormalStream, draw_normals

PDS, DJS = "pds", "djs"
# rows evaluated at once by the simulation estimators
CHUNK = 1 << 16


class ConfigurationError(ValueError):
    pass


class NotApplicableError(ValueError):
    pass


@dataclass(frozen=True)
class ExposureTask:
    """What to measure: a single option or a netting set, under one market."""

    target: OptionSpec | tuple[OptionSpec, ...]
    market: MarketParams
    buckets: BucketGrid
    collateral: float = 0.0
    discount: bool = False

    def __post_init__(self):
        if not isinstance(self.target, OptionSpec):
            object.__setattr__(self, "target", tuple(self.target))
        if self.collateral < 0:
            raise ValueError("collateral must be non-negative")

    @property
    def is_portfolio(self) -> bool:
        return not isinstance(self.target, OptionSpec)

    @property
    def positions(self) -> tuple[OptionSpec, ...]:
        return self.target if self.is_portfolio else (self.target,)

    def mtm(self, t: float, spot):
        m = self.market
        return portfolio_mtm(self.positions, spot, m.rate, m.vol, t)

    def exposure(self, t: float, z):
        """(MtM - V)^+ at bucket time t for standard normal coordinates z of W_t / sqrt(t)."""
        spot = underlying_at(self.market, t, z)
        return np.maximum(np.asarray(self.mtm(t, spot)) - self.collateral, 0.0)

    def exposure_at_w(self, t: float, w):
        """Same as :meth:`exposure` but driven by the Brownian value W_t itself."""
        z = np.asarray(w, float) / math.sqrt(t)
        return self.exposure(t, z)

    def discount_factors(self) -> np.ndarray:
        t = np.asarray(self.buckets.times)
        return np.exp(-self.market.rate * t) if self.discount else np.ones_like(t)


@dataclass(frozen=True)
class ExposureProfile:
    buckets: BucketGrid
    ee: np.ndarray
    epe: float
    eee: np.ndarray
    eepe: float
    method: str
    pfe: Mapping[float, np.ndarray] = field(default_factory=dict)
    stderr: np.ndarray | None = None
    epe_stderr: float | None = None


def time_average(buckets: BucketGrid, values) -> float:
    """sum_k v_k Delta_k / t_K."""
    v = np.asarray(values, float)
    return math.fsum(v * buckets.deltas) / buckets.horizon


def make_profile(buckets, ee, method, *, stderr=None, epe_stderr=None, pfe=None) -> ExposureProfile:
    """Assemble a profile; EPE, EEE and EEPE are always derived from ``ee``."""
    ee = np.asarray(ee, dtype=float)
    if ee.shape != (len(buckets),):
        raise ConfigurationError(f"expected {len(buckets)} EE values, got shape {ee.shape}")
    if np.any(ee < 0):
        raise ValueError("expected exposures must be non-negative")
    eee = np.maximum.accumulate(ee)
    for arr in (ee, eee):
        arr.setflags(write=False)
    return ExposureProfile(
        buckets=buckets,
        ee=ee,
        epe=time_average(buckets, ee),
        eee=eee,
        eepe=time_average(buckets, eee),
        method=method,
        pfe={float(a): np.asarray(v, float) for a, v in (pfe or {}).items()},
        stderr=None if stderr is None else np.asarray(stderr, float),
        epe_stderr=epe_stderr,
    )


# ---------------------------------------------------------------------------
# PFE


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")


def pfe(values, alpha: float, weights=None):
    """alpha-quantile of the positive exposure, left-continuous convention.

    Returns the smallest atom v with P(E <= v) >= alpha. ``values`` is either
    1-D (one bucket) or 2-D with one column per bucket; ``weights`` are the
    atom probabilities (equal weights when omitted) with the row layout of
    ``values``.
    """
    _check_alpha(alpha)
    vals = np.asarray(values, float)
    one_d = vals.ndim == 1
    if one_d:
        vals = vals[:, None]
    n = vals.shape[0]
    if weights is None:
        # inverted-cdf sample quantile: order statistic ceil(alpha n)
        idx = max(int(math.ceil(alpha * n - 1e-9)) - 1, 0)
        out = np.sort(vals, axis=0)[idx]
    else:
        w = np.asarray(weights, float)
        if w.ndim == 1:
            w = np.broadcast_to(w[:, None], vals.shape)
        out = np.empty(vals.shape[1])
        for k in range(vals.shape[1]):
            order = np.argsort(vals[:, k], kind="stable")
            cum = np.cumsum(w[order, k])
            # 1e-12 absorbs rounding in the cumulative cell masses
            pos = min(int(np.searchsorted(cum, alpha - 1e-12, side="left")), n - 1)
            out[k] = vals[order[pos], k]
    return float(out[0]) if one_d else out


# ---------------------------------------------------------------------------
# estimators


def ee_analytic(task: ExposureTask) -> ExposureProfile:
    """Martingale benchmark EE_k = MtM(0, S_0) exp(r t_k) for one bought option.

    Discounting (when enabled on the task) removes the growth factor again.
    """
    if task.is_portfolio or task.collateral:
        raise NotApplicableError("no closed form once the positive part acts on a netting set")
    opt, m = task.target, task.market
    t = np.asarray(task.buckets.times)
    if opt.side == "sell":
        ee = np.zeros_like(t)
    else:
        mtm0 = opt.quantity * bs_price(opt.kind, m.spot, opt.strike, m.rate, m.vol, opt.maturity)
        ee = mtm0 * np.exp(m.rate * t)
    return make_profile(task.buckets, ee * task.discount_factors(), "analytic")


def _per_bucket_grids(grids, k: int) -> list[QuantizerGrid]:
    if isinstance(grids, QuantizerGrid):
        return [grids] * k
    grids = list(grids)
    if len(grids) != k:
        raise ConfigurationError(f"need one grid per bucket ({k}), got {len(grids)}")
    return grids


def _atoms(task: ExposureTask, grids: Sequence[QuantizerGrid]) -> list[np.ndarray]:
    return [task.exposure(t, g.points) for t, g in zip(task.buckets.times, grids)]


def _weighted_pfe(atoms, weights, alphas) -> dict[float, np.ndarray]:
    out = {}
    for a in alphas:
        out[a] = np.array([pfe(v, a, w) for v, w in zip(atoms, weights)])
    return out


def ee_quantized_djs(task: ExposureTask, grids, pfe_alphas: Sequence[float] = ()) -> ExposureProfile:
    """EE_k = sum_i (MtM(t_k, S(x_i^k)) - V)^+ p_i^k on per-bucket optimal grids.

    ``grids`` is one :class:`QuantizerGrid` reused at every bucket or one grid
    per bucket.
    """
    grids = _per_bucket_grids(grids, len(task.buckets))
    atoms = _atoms(task, grids)
    ee = np.array([math.fsum(a * g.probs) for a, g in zip(atoms, grids)])
    pf = _weighted_pfe(atoms, [g.probs for g in grids], pfe_alphas)
    disc = task.discount_factors()
    return make_profile(task.buckets, ee * disc, "quantization", pfe={a: v * disc for a, v in pf.items()})


def propagate_marginals(grids: Sequence[QuantizerGrid], transitions: Sequence[TransitionMatrix]) -> list[np.ndarray]:
    """q_1 = p^1, q_{k+1} = q_k pi^k."""
    if len(transitions) != len(grids) - 1:
        raise ConfigurationError(f"{len(grids)} buckets need {len(grids) - 1} transition matrices")
    q = [np.asarray(grids[0].probs, float)]
    for k, tm in enumerate(transitions):
        if tm.shape != (grids[k].size, grids[k + 1].size):
            raise ConfigurationError(
                f"transition {k} has shape {tm.shape}, grids need ({grids[k].size}, {grids[k + 1].size})"
            )
        q.append(q[-1] @ tm.pi)
    return q


def ee_quantized_tree(
    task: ExposureTask,
    grids,
    transitions: Sequence[TransitionMatrix] | None = None,
    prune_z: float | None = None,
    pfe_alphas: Sequence[float] = (),
) -> ExposureProfile:
    """Quantization-tree estimator: marginal weights propagated through pi^k.

    Transition matrices are built (optionally pruned) when not supplied.
    Only the node marginals are carried forward; the prod N_k paths of the
    tree are never enumerated.
    """
    grids = _per_bucket_grids(grids, len(task.buckets))
    if transitions is None:
        transitions = tree_transitions(grids, task.buckets.times, prune_z=prune_z)
    q = propagate_marginals(grids, transitions)
    atoms = _atoms(task, grids)
    ee = np.array([math.fsum(a * w) for a, w in zip(atoms, q)])
    pf = _weighted_pfe(atoms, q, pfe_alphas)
    disc = task.discount_factors()
    return make_profile(task.buckets, ee * disc, "quantization-tree", pfe={a: v * disc for a, v in pf.items()})


def ee_quantized_pds(task: ExposureTask, points, probs, pfe_alphas: Sequence[float] = ()) -> ExposureProfile:
    """Path-wise quantized estimator from a K-dimensional quantizer of N(0, I_K).

    Coordinate k of each quantizer point is read as a standardized Brownian
    increment over (t_{k-1}, t_k]; the weighted paths are then priced bucket
    by bucket.
    """
    x = np.asarray(points, float)
    w = np.asarray(probs, float)
    k = len(task.buckets)
    if x.ndim != 2 or x.shape[1] != k or w.shape != (x.shape[0],):
        raise ConfigurationError(f"need an (M, {k}) point array with M weights")
    w_paths = np.cumsum(x * np.sqrt(task.buckets.deltas), axis=1)
    atoms = [task.exposure_at_w(t, w_paths[:, j]) for j, t in enumerate(task.buckets.times)]
    ee = np.array([math.fsum(a * w) for a in atoms])
    pf = _weighted_pfe(atoms, [w] * k, pfe_alphas)
    disc = task.discount_factors()
    return make_profile(task.buckets, ee * disc, "quantization-pds", pfe={a: v * disc for a, v in pf.items()})


def _simulate(task: ExposureTask, stream: NormalStream, n: int, mode: str, keep_samples: bool):
    """Chunked simulation; returns per-bucket sums, sums of squares, per-path EPE moments."""
    times = np.asarray(task.buckets.times)
    k = times.size
    weights = task.buckets.deltas / task.buckets.horizon * task.discount_factors()
    if stream.dimension != k:
        raise ConfigurationError(f"stream dimension {stream.dimension} != number of buckets {k}")
    sums = [[] for _ in range(k)]
    sqs = [[] for _ in range(k)]
    epe_sum, epe_sq = [], []
    samples = np.empty((n, k)) if keep_samples else None
    done = 0
    while done < n:
        m = min(CHUNK, n - done)
        z = draw_normals(stream, m)
        if mode == PDS:
            w = np.cumsum(z * np.sqrt(task.buckets.deltas), axis=1)
        elif mode == DJS:
            w = z * np.sqrt(times)
        else:
            raise ConfigurationError(f"unknown simulation mode {mode!r}")
        e = np.column_stack([task.exposure_at_w(t, w[:, j]) for j, t in enumerate(times)])
        for j in range(k):
            sums[j].append(e[:, j].sum())
            sqs[j].append((e[:, j] ** 2).sum())
        path_epe = e @ weights
        epe_sum.append(path_epe.sum())
        epe_sq.append((path_epe**2).sum())
        if keep_samples:
            samples[done : done + m] = e
        done += m
    s = np.array([math.fsum(v) for v in sums])
    s2 = np.array([math.fsum(v) for v in sqs])
    return s, s2, math.fsum(epe_sum), math.fsum(epe_sq), samples


def _stderr(total, total_sq, n):
    mean = total / n
    var = np.maximum(total_sq - n * mean * mean, 0.0) / (n - 1)
    return np.sqrt(var / n)


def ee_mc(
    task: ExposureTask,
    n_paths: int,
    mode: str = PDS,
    stream: NormalStream | None = None,
    pfe_alphas: Sequence[float] = (),
) -> ExposureProfile:
    """Plain Monte Carlo EE with per-bucket and EPE standard errors.

    ``mode="pds"`` builds each path from successive Brownian increments,
    ``mode="djs"`` draws every bucket's W_{t_k} independently.
    """
    if n_paths < 2:
        raise ValueError("Monte Carlo needs at least two paths")
    if stream is None:
        stream = NormalStream.pseudo(dimension=len(task.buckets))
    s, s2, es, es2, samples = _simulate(task, stream, n_paths, mode, bool(pfe_alphas))
    disc = task.discount_factors()
    ee = s / n_paths
    stderr = _stderr(s, s2, n_paths)
    epe_se = float(_stderr(es, es2, n_paths))
    pf = {a: pfe(samples, a) * disc for a in pfe_alphas}
    return make_profile(task.buckets, ee * disc, "mc", stderr=stderr * disc, epe_stderr=epe_se, pfe=pf)


def ee_sobol(
    task: ExposureTask,
    n_points: int,
    skip: int = 1,
    pfe_alphas: Sequence[float] = (),
    sample_stderr: bool = False,
) -> ExposureProfile:
    """Direct-jump estimator on an unscrambled Sobol set, one coordinate per bucket.

    A deterministic point set has no sampling error, so ``stderr`` is left
    empty. ``sample_stderr=True`` fills it with the i.i.d. formula
    sd / sqrt(n) anyway, which is the usual way to quote an "RSD" for
    small Sobol runs. It is a spread indicator, not an error bound.
    """
    if n_points < 1:
        raise ValueError("need at least one Sobol point")
    if sample_stderr and n_points < 2:
        raise ValueError("a sample standard error needs at least two points")
    stream = NormalStream(SOBOL, len(task.buckets), skip)
    s, s2, es, es2, samples = _simulate(task, stream, n_points, DJS, bool(pfe_alphas))
    disc = task.discount_factors()
    pf = {a: pfe(samples, a) * disc for a in pfe_alphas}
    if not sample_stderr:
        return make_profile(task.buckets, s / n_points * disc, "sobol", pfe=pf)
    return make_profile(
        task.buckets, s / n_points * disc, "sobol",
        stderr=_stderr(s, s2, n_points) * disc, epe_stderr=float(_stderr(es, es2, n_points)), pfe=pf,
    )


def ee_numerical(task: ExposureTask, n_nodes: int = 1000, z_max: float = 4.0) -> ExposureProfile:
    """Midpoint rectangle rule for E[(MtM - V)^+] over z in [-z_max, z_max].

    The default range of +-4 is the classic textbook setting and leaves a
    truncation bias of a few 1e-4 relative; pass a wider ``z_max`` for a
    truncation-free integral.
    """
    if n_nodes < 1:
        raise ValueError("need at least one node")
    h = 2.0 * z_max / n_nodes
    z = -z_max + h * (np.arange(n_nodes) + 0.5)
    w = INV_SQRT_2PI * np.exp(-0.5 * z * z) * h
    ee = np.array([math.fsum(task.exposure(t, z) * w) for t in task.buckets.times])
    return make_profile(task.buckets, ee * task.discount_factors(), "numerical")


# ---------------------------------------------------------------------------
# error metrics


@dataclass(frozen=True)
class ErrorMetrics:
    """Percent errors of an estimate against a benchmark.

    ``eps`` and ``epe_eps`` are NaN wherever the benchmark is exactly zero.
    ``rsd`` is present only when the estimate carries standard errors.
    """

    eps: np.ndarray
    epe_eps: float
    rsd: np.ndarray | None = None
    epe_rsd: float | None = None

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.eps)


def _pct(est, ref):
    est, ref = np.asarray(est, float), np.asarray(ref, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ref == 0.0, np.nan, 100.0 * (est - ref) / np.where(ref == 0.0, 1.0, ref))


def error_metrics(estimate: ExposureProfile, benchmark: ExposureProfile) -> ErrorMetrics:
    if estimate.buckets.times != benchmark.buckets.times:
        raise ConfigurationError("estimate and benchmark use different bucket grids")
    rsd = epe_rsd = None
    if estimate.stderr is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            rsd = np.where(estimate.ee == 0.0, np.nan, 100.0 * estimate.stderr / np.where(estimate.ee == 0, 1, estimate.ee))
        if estimate.epe_stderr is not None and estimate.epe > 0:
            epe_rsd = 100.0 * estimate.epe_stderr / estimate.epe
    return ErrorMetrics(
        eps=_pct(estimate.ee, benchmark.ee),
        epe_eps=float(_pct(estimate.epe, benchmark.epe)),
        rsd=rsd,
        epe_rsd=epe_rsd,
    )
