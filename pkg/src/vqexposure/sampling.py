"""Deterministic standard-normal streams for the Monte Carlo and Sobol baselines.

Both kinds produce uniforms first and map them through the normal quantile,
so pseudo-random and quasi-random runs differ only in the uniform source.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .gaussnum import normal_quantile

DEFAULT_SEED = 0x5EED_CCE0
PSEUDO, SOBOL = "pseudo", "sobol"
# scipy ships Joe-Kuo direction numbers up to this dimension
MAX_SOBOL_DIM = qmc.Sobol.MAXDIM


class DimensionError(ValueError):
    pass


@dataclass
class NormalStream:
    """Stateful source of N(0, 1) rows of length ``dimension``.

    ``start`` is the seed for the pseudo-random kind and the index of the
    first Sobol point for the sobol kind (1 skips the all-zeros point).
    """

    kind: str = PSEUDO
    dimension: int = 1
    start: int = DEFAULT_SEED
    _engine: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == PSEUDO:
            self._engine = np.random.Philox(self.start)
        elif self.kind == SOBOL:
            if self.dimension > MAX_SOBOL_DIM:
                raise DimensionError(f"Sobol direction numbers available up to dimension {MAX_SOBOL_DIM}")
            if self.start < 0:
                raise ValueError("Sobol start index must be >= 0")
            self._engine = qmc.Sobol(self.dimension, scramble=False)
            if self.start:
                self._engine.fast_forward(self.start)
        else:
            raise ValueError(f"unknown stream kind {self.kind!r}")

    @classmethod
    def pseudo(cls, seed: int = DEFAULT_SEED, dimension: int = 1) -> "NormalStream":
        return cls(PSEUDO, dimension, seed)

    @classmethod
    def sobol(cls, dimension: int, skip: int = 1) -> "NormalStream":
        return cls(SOBOL, dimension, skip)

    def uniforms(self, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        if self.kind == PSEUDO:
            raw = self._engine.random_raw(count * self.dimension) >> np.uint64(11)
            # midpoints of a 2^-53 lattice: never exactly 0 or 1
            u = (raw.astype(np.float64) + 0.5) * 2.0**-53
            return u.reshape(count, self.dimension)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return self._engine.random(count)

    def substream(self, index: int) -> "NormalStream":
        """Independent stream for parallel worker ``index``.

        Pseudo-random: the generator jumped ahead by ``index`` * 2^128 draws.
        Sobol: not supported, split index ranges instead.
        """
        if self.kind != PSEUDO:
            raise ValueError("split Sobol work by disjoint index blocks, not substreams")
        child = NormalStream(PSEUDO, self.dimension, self.start)
        child._engine = np.random.Philox(self.start).jumped(index)
        return child


def draw_normals(stream: NormalStream, count: int) -> np.ndarray:
    """``count`` x ``dimension`` standard normal variates; advances the stream."""
    return np.asarray(normal_quantile(stream.uniforms(count)))


def sobol_uniforms(dimension: int, count: int, start: int = 0) -> np.ndarray:
    """Raw unscrambled Sobol points with indices start .. start + count - 1."""
    return NormalStream(SOBOL, dimension, start).uniforms(count)
