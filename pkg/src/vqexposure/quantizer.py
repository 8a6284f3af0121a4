"""Optimal quadratic quantizers of N(0, 1) and quantization-tree transitions.

A grid is built once (Lloyd fixed point, finished by Newton steps on the
stationarity system) and then reused for every time bucket: the Brownian
marginal at time t is quantized by the same grid scaled by sqrt(t).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, linalg

from .gaussnum import (
    INV_SQRT_2PI,
    interval_mass,
    normal_quantile,
    truncated_first_moment,
    truncated_second_moment,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
# outer integral of a boundary cell is cut at this many standard deviations
TAIL_CUTOFF = 10.0
QUAD_EPSABS = 1e-10


class GridConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class GridFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)
        self.lineno = lineno


class FirstStepError(ValueError):
    """A transition out of t = 0 was requested; use marginal probabilities."""


class QuadratureError(RuntimeError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuantizerGrid:
    """Quantizer of N(0, 1): ordered points, Voronoi cell weights, distortion."""

    points: np.ndarray
    probs: np.ndarray
    distortion: float

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        object.__setattr__(self, "probs", _frozen(self.probs))
        if self.points.ndim != 1 or self.points.shape != self.probs.shape or self.points.size == 0:
            raise ValueError("points and probs must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(self.points) <= 0):
            raise ValueError("grid points must be strictly increasing")

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def boundaries(self) -> np.ndarray:
        return voronoi_boundaries(self.points)

    def __eq__(self, other):
        if not isinstance(other, QuantizerGrid):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None


def voronoi_boundaries(points) -> np.ndarray:
    """Cell edges b_0 = -inf < b_1 < ... < b_N = +inf with b_i the midpoints."""
    x = np.asarray(points, dtype=float)
    b = np.empty(x.size + 1)
    b[0], b[-1] = -np.inf, np.inf
    b[1:-1] = 0.5 * (x[:-1] + x[1:])
    return b


def cell_probabilities(points) -> np.ndarray:
    b = voronoi_boundaries(points)
    return np.asarray(interval_mass(b[:-1], b[1:]), dtype=float).reshape(-1)


def cell_centroids(points) -> np.ndarray:
    b = voronoi_boundaries(points)
    mass = np.asarray(interval_mass(b[:-1], b[1:])).reshape(-1)
    return np.asarray(truncated_first_moment(b[:-1], b[1:])).reshape(-1) / mass


def stationarity_residual(points) -> float:
    """max_i |x_i - E[X | X in C_i]|."""
    x = np.asarray(points, dtype=float)
    return float(np.max(np.abs(x - cell_centroids(x))))


def distortion(grid_or_points) -> float:
    """Quadratic distortion E[min_i |X - x_i|^2], summed cell by cell in closed form."""
    x = grid_or_points.points if isinstance(grid_or_points, QuantizerGrid) else np.asarray(grid_or_points, float)
    b = voronoi_boundaries(x)
    lo, hi = b[:-1], b[1:]
    mass = np.asarray(interval_mass(lo, hi)).reshape(-1)
    m1 = np.asarray(truncated_first_moment(lo, hi)).reshape(-1)
    m2 = np.asarray(truncated_second_moment((lo, hi))).reshape(-1)
    per_cell = m2 - 2.0 * x * m1 + x * x * mass
    return float(math.fsum(per_cell))


def make_grid(points) -> QuantizerGrid:
    x = np.asarray(points, dtype=float)
    return QuantizerGrid(x, cell_probabilities(x), distortion(x))


def _symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x - x[::-1])


def _newton_step(x: np.ndarray) -> np.ndarray:
    # Newton on F_i = x_i p_i - E[X 1{C_i}]; the Jacobian is symmetric tridiagonal.
    b = voronoi_boundaries(x)
    mass = np.asarray(interval_mass(b[:-1], b[1:])).reshape(-1)
    m1 = np.asarray(truncated_first_moment(b[:-1], b[1:])).reshape(-1)
    F = x * mass - m1
    gaps = np.diff(x)
    inner_pdf = INV_SQRT_2PI * np.exp(-0.5 * b[1:-1] ** 2)
    off = -0.25 * gaps * inner_pdf
    diag = mass.copy()
    diag[:-1] += off
    diag[1:] += off
    ab = np.zeros((3, x.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return x - linalg.solve_banded((1, 1), ab, F)


def build_grid(n: int, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QuantizerGrid:
    """Stationary (and, for N(0,1), optimal) quadratic quantizer of size n.

    Starts from the mid-quantiles and iterates Newton steps on the
    stationarity equations x_i = E[X | X in C_i(x)], falling back to a plain
    Lloyd update x <- E[X | X in C(x)] whenever a Newton step would break the
    ordering or fail to reduce the residual. The returned grid is antisymmetric
    and every point is within ``tol`` of its cell centroid.

    Raises
    ------
    GridConvergenceError
        If the residual is still above ``tol`` after ``max_iter`` updates.
    """
    if n < 1:
        raise ValueError("grid size must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n == 1:
        return make_grid([0.0])

    x = _symmetrize(np.asarray(normal_quantile((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n))))
    residual = stationarity_residual(x)
    it = 0
    while residual > tol and it < max_iter:
        it += 1
        candidate = _symmetrize(_newton_step(x))
        if np.all(np.diff(candidate) > 0):
            cand_res = stationarity_residual(candidate)
            if cand_res < residual:
                x, residual = candidate, cand_res
                continue
        x = _symmetrize(cell_centroids(x))
        residual = stationarity_residual(x)
    if residual > tol:
        raise GridConvergenceError(
            f"grid of size {n} not stationary after {max_iter} iterations (residual {residual:.3e})",
            residual,
        )
    return make_grid(x)


@dataclass(frozen=True)
class TransitionMatrix:
    """Conditional cell-to-cell probabilities between buckets k and k+1."""

    step: int
    pi: np.ndarray
    pruned: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        mask = np.zeros(self.pi.shape, bool) if self.pruned is None else np.array(self.pruned, bool)
        mask.setflags(write=False)
        object.__setattr__(self, "pruned", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pi.shape


def transition_matrix(
    grid_k: QuantizerGrid,
    grid_k1: QuantizerGrid,
    t_k: float,
    t_k1: float,
    prune_z: float | None = None,
    step: int = 0,
) -> TransitionMatrix:
    """pi_ij = P(W_{t_k1} in sqrt(t_k1) C_j | W_{t_k} in sqrt(t_k) C_i).

    The inner integral over the arrival cell is a difference of normal cdfs;
    the outer one, over the departure cell against the N(0, t_k) density, is
    done by adaptive Gauss-Kronrod quadrature on all arrival cells at once.
    With ``prune_z`` set, arrival cells whose standardized jump
    |x_j sqrt(t_k1) - x_i sqrt(t_k)| / sqrt(t_k1 - t_k) exceeds it are never
    integrated; the surviving row is renormalized.
    """
    if t_k <= 0:
        raise FirstStepError("the first bucket has no predecessor; use its marginal probabilities")
    if not t_k1 > t_k:
        raise ValueError("bucket times must be strictly increasing")
    sk, sk1, sd = math.sqrt(t_k), math.sqrt(t_k1), math.sqrt(t_k1 - t_k)
    out_edges = grid_k.boundaries * sk
    out_edges = np.clip(out_edges, -TAIL_CUTOFF * sk, TAIL_CUTOFF * sk)
    in_edges = grid_k1.boundaries * sk1
    n_k, n_k1 = grid_k.size, grid_k1.size

    pi = np.zeros((n_k, n_k1))
    pruned = np.zeros((n_k, n_k1), bool)
    jump = (grid_k1.points[None, :] * sk1 - grid_k.points[:, None] * sk) / sd
    if prune_z is not None:
        pruned = np.abs(jump) > prune_z
        # keep at least the nearest arrival cell of every row
        nearest = np.argmin(np.abs(jump), axis=1)
        pruned[np.arange(n_k), nearest] = False

    for i in range(n_k):
        keep = np.flatnonzero(~pruned[i])
        j0, j1 = keep[0], keep[-1] + 1
        lo_edges, hi_edges = in_edges[j0:j1], in_edges[j0 + 1 : j1 + 1]

        def integrand(y, lo_edges=lo_edges, hi_edges=hi_edges):
            dens = INV_SQRT_2PI / sk * math.exp(-0.5 * (y / sk) ** 2)
            return dens * interval_mass((lo_edges - y) / sd, (hi_edges - y) / sd)

        p_i = grid_k.probs[i]
        res, err, info = integrate.quad_vec(
            integrand,
            out_edges[i],
            out_edges[i + 1],
            epsabs=QUAD_EPSABS * min(1.0, p_i),
            epsrel=1e-12,
            norm="max",
            limit=2000,
            full_output=True,
        )
        if not info.success:
            raise QuadratureError(f"transition row {i} of step {step}: {info.message} (error {err:.2e})")
        row = np.zeros(n_k1)
        row[j0:j1] = np.asarray(res) / p_i
        row[pruned[i]] = 0.0
        if prune_z is not None:
            row /= row.sum()
        pi[i] = np.clip(row, 0.0, 1.0)
    return TransitionMatrix(step, pi, pruned)


def tree_transitions(grids, times, prune_z: float | None = None) -> list[TransitionMatrix]:
    """Transition matrices linking consecutive buckets (len(times) - 1 of them)."""
    if len(grids) != len(times):
        raise ValueError("need one grid per bucket")
    return [
        transition_matrix(grids[k], grids[k + 1], times[k], times[k + 1], prune_z=prune_z, step=k)
        for k in range(len(times) - 1)
    ]


def chapman_check(p_k, pi, p_k1) -> float:
    """max_j |sum_i p_i^k pi_ij - p_j^{k+1}|."""
    mat = pi.pi if isinstance(pi, TransitionMatrix) else np.asarray(pi, float)
    p_k = np.asarray(p_k, float)
    p_k1 = np.asarray(p_k1, float)
    if mat.shape != (p_k.size, p_k1.size):
        raise ValueError(f"shape mismatch: {mat.shape} vs ({p_k.size}, {p_k1.size})")
    return float(np.max(np.abs(p_k @ mat - p_k1)))


def product_grid(grids) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian product of 1-D grids as a d-dimensional quantizer.

    Returns ``(points, probs)`` with points of shape (prod N_k, d). The
    product of stationary 1-D quantizers is a stationary quantizer of
    N(0, I_d).
    """
    axes = [g.points for g in grids]
    weights = [g.probs for g in grids]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    wmesh = np.meshgrid(*weights, indexing="ij")
    probs = np.prod(np.stack([w.reshape(-1) for w in wmesh], axis=1), axis=1)
    return points, probs


def save_grid(grid: QuantizerGrid, path) -> None:
    lines = [f"N={grid.size}"]
    lines += [f"{x:.17g}\t{p:.17g}" for x, p in zip(grid.points, grid.probs)]
    text = "\n".join(lines) + "\n"
    path = Path(path)
    if path.exists() and path.read_text() == text:
        return
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_grid(path) -> QuantizerGrid:
    """Read a grid file: ``N=<n>`` then n lines ``x<TAB>p``.

    Raises
    ------
    GridFormatError
        On any malformed line, with its 1-based line number.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].strip().startswith("N="):
        raise GridFormatError("missing 'N=<n>' header", 1)
    try:
        n = int(lines[0].strip()[2:])
    except ValueError:
        raise GridFormatError(f"bad header {lines[0]!r}", 1) from None
    body = [(no, ln) for no, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != n:
        raise GridFormatError(f"header announces {n} points, found {len(body)}", len(lines))
    points, probs = np.empty(n), np.empty(n)
    for idx, (no, ln) in enumerate(body):
        fields = ln.split()
        if len(fields) != 2:
            raise GridFormatError(f"expected 'x p', got {ln!r}", no)
        try:
            points[idx], probs[idx] = float(fields[0]), float(fields[1])
        except ValueError:
            raise GridFormatError(f"not a number in {ln!r}", no) from None
        if not (math.isfinite(points[idx]) and math.isfinite(probs[idx])):
            raise GridFormatError("non-finite value", no)
        if idx and points[idx] <= points[idx - 1]:
            raise GridFormatError("points must be strictly increasing", no)
        if probs[idx] <= 0:
            raise GridFormatError("cell probability must be positive", no)
    if abs(math.fsum(probs) - 1.0) > 1e-9:
        raise GridFormatError(f"probabilities sum to {math.fsum(probs)!r}", len(lines))
    return QuantizerGrid(points, probs, distortion(points))

