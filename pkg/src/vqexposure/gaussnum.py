"""Standard normal special functions and truncated moments.

Every function accepts scalars or numpy arrays. Infinite endpoints are
allowed wherever an interval bound is expected; the density and ``x * pdf(x)``
are taken to be zero at +/-inf.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import special

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class DegenerateCellError(ValueError):
    """Raised when a cell carries zero standard normal probability."""


class Interval(NamedTuple):
    lower: float
    upper: float

    def check(self) -> "Interval":
        if not self.lower < self.upper:
            raise ValueError(f"interval lower bound {self.lower} must be < upper {self.upper}")
        return self


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return out if out.ndim else float(out)


def normal_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` on the open unit interval.

    Raises
    ------
    ValueError
        If any ``p`` lies outside (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("normal_quantile needs probabilities strictly inside (0, 1)")
    out = special.ndtri(p)
    return out if out.ndim else float(out)


def _pdf_ext(x):
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _xpdf_ext(x):
    x = np.asarray(x, dtype=float)
    fin = np.isfinite(x)
    xf = np.where(fin, x, 0.0)
    return np.where(fin, xf * INV_SQRT_2PI * np.exp(-0.5 * xf * xf), 0.0)


def interval_mass(lower, upper):
    """P(lower < X < upper) for X ~ N(0, 1), accurate in both tails.

    Cells lying in the upper tail are evaluated through the survival
    function so that far-tail masses keep their relative precision.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    upper_tail = lo > 0.0
    out = np.where(upper_tail, special.ndtr(-lo) - special.ndtr(-hi), special.ndtr(hi) - special.ndtr(lo))
    return out if out.ndim else float(out)


def truncated_first_moment(lower, upper):
    """E[X 1{lower < X < upper}] = pdf(lower) - pdf(upper)."""
    out = _pdf_ext(lower) - _pdf_ext(upper)
    return out if np.ndim(out) else float(out)


def truncated_mean(cell: Interval | tuple[float, float]):
    """Conditional mean E[X | X in cell] of a standard normal.

    Parameters
    ----------
    cell : Interval or (lower, upper)
        Bounds may be infinite and may be arrays of equal shape.

    Raises
    ------
    DegenerateCellError
        If the cell has zero probability in double precision.
    """
    lower, upper = cell
    mass = np.asarray(interval_mass(lower, upper))
    if np.any(mass <= 0.0):
        raise DegenerateCellError(f"cell ({lower}, {upper}) has zero probability")
    out = np.asarray(truncated_first_moment(lower, upper)) / mass
    return out if out.ndim else float(out)


def truncated_second_moment(cell: Interval | tuple[float, float]):
    """E[X^2 1{X in cell}] = mass + l pdf(l) - u pdf(u)."""
    lower, upper = cell
    mass = np.asarray(interval_mass(lower, upper))
    if np.any(mass <= 0.0):
        raise DegenerateCellError(f"cell ({lower}, {upper}) has zero probability")
    out = mass + _xpdf_ext(lower) - _xpdf_ext(upper)
    return out if out.ndim else float(out)
