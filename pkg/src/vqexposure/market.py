"""Black-Scholes market: GBM mapping, closed-form vanilla prices, positions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .gaussnum import normal_cdf

CALL, PUT = "call", "put"
BUY, SELL = "buy", "sell"

# 1w, 2w, 3w, 4w, 2m, 3m, 6m, 9m, 1y
STANDARD_BUCKET_TIMES = (1 / 52, 2 / 52, 3 / 52, 4 / 52, 2 / 12, 3 / 12, 6 / 12, 9 / 12, 1.0)
STANDARD_BUCKET_LABELS = ("1w", "2w", "3w", "1m", "2m", "3m", "6m", "9m", "1y")


class PortfolioFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        super().__init__((f"line {lineno}: " if lineno is not None else "") + message)
        self.lineno = lineno


@dataclass(frozen=True)
class MarketParams:
    spot: float
    rate: float
    vol: float

    def __post_init__(self):
        if not self.spot > 0:
            raise ValueError("spot must be positive")
        if not self.vol > 0:
            raise ValueError("vol must be positive")


@dataclass(frozen=True)
class OptionSpec:
    kind: str
    strike: float
    maturity: float
    side: str = BUY
    quantity: float = 1.0

    def __post_init__(self):
        if self.kind not in (CALL, PUT):
            raise ValueError(f"kind must be 'call' or 'put', got {self.kind!r}")
        if self.side not in (BUY, SELL):
            raise ValueError(f"side must be 'buy' or 'sell', got {self.side!r}")
        if not self.strike > 0:
            raise ValueError("strike must be positive")
        if not self.maturity > 0:
            raise ValueError("maturity must be positive")
        if not self.quantity > 0:
            raise ValueError("quantity must be positive")

    @property
    def sign(self) -> float:
        return 1.0 if self.side == BUY else -1.0


@dataclass(frozen=True)
class BucketGrid:
    """Exposure dates t_1 < ... < t_K after an implicit t_0 = 0."""

    times: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("bucket grid needs at least one date")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("bucket times must be positive and strictly increasing")
        object.__setattr__(self, "times", times)
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(f"{t:.6g}y" for t in times))
        elif len(self.labels) != len(times):
            raise ValueError("one label per bucket")
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.times)))

    @property
    def horizon(self) -> float:
        return self.times[-1]

    def __len__(self) -> int:
        return len(self.times)


def standard_buckets() -> BucketGrid:
    return BucketGrid(STANDARD_BUCKET_TIMES, STANDARD_BUCKET_LABELS)


def underlying_at(params: MarketParams, t: float, z):
    """S_t = S_0 exp((r - vol^2/2) t + vol sqrt(t) z) for standard normal z."""
    if t < 0:
        raise ValueError("time must be non-negative")
    z = np.asarray(z, dtype=float)
    out = params.spot * np.exp((params.rate - 0.5 * params.vol**2) * t + params.vol * math.sqrt(t) * z)
    return out if out.ndim else float(out)


def bs_price(kind: str, spot, strike: float, rate: float, vol: float, tau: float):
    """Black-Scholes price of a European call or put; intrinsic value at tau = 0.

    ``spot`` may be an array; the result has its shape.
    """
    if tau < 0:
        raise ValueError("time to maturity must be non-negative")
    if kind not in (CALL, PUT):
        raise ValueError(f"unknown option kind {kind!r}")
    s = np.asarray(spot, dtype=float)
    if tau == 0:
        out = np.maximum(s - strike, 0.0) if kind == CALL else np.maximum(strike - s, 0.0)
        return out if out.ndim else float(out)
    sd = vol * math.sqrt(tau)
    disc_k = strike * math.exp(-rate * tau)
    with np.errstate(divide="ignore"):
        d1 = (np.log(s / strike) + (rate + 0.5 * vol * vol) * tau) / sd
    d2 = d1 - sd
    if kind == CALL:
        out = s * normal_cdf(d1) - disc_k * normal_cdf(d2)
    else:
        out = disc_k * normal_cdf(-d2) - s * normal_cdf(-d1)
    out = np.maximum(out, 0.0)
    return out if np.ndim(out) else float(out)


def position_mtm(option: OptionSpec, spot, rate: float, vol: float, t: float):
    """Signed MtM of one position at valuation time t."""
    price = bs_price(option.kind, spot, option.strike, rate, vol, option.maturity - t)
    return option.sign * option.quantity * price


def portfolio_mtm(portfolio: Sequence[OptionSpec], spot, rate: float, vol: float, t: float):
    """Netting-set MtM: sum of signed position values (no positive part)."""
    total = np.zeros(np.shape(spot))
    for option in portfolio:
        total = total + position_mtm(option, spot, rate, vol, t)
    return total if total.ndim else float(total)


def netting10(maturity: float = 1.0) -> list[OptionSpec]:
    """The ten-option netting set used in the portfolio experiments."""
    rows = [
        (CALL, BUY, 125), (CALL, SELL, 100), (CALL, BUY, 80), (CALL, SELL, 95), (CALL, BUY, 105),
        (PUT, SELL, 80), (PUT, SELL, 100), (PUT, BUY, 110), (PUT, BUY, 90), (PUT, SELL, 120),
    ]
    return [OptionSpec(kind, float(k), maturity, side) for kind, side, k in rows]


def parse_portfolio(text: str) -> list[OptionSpec]:
    """Parse ``kind side strike maturity [quantity]`` lines; '#' starts a comment."""
    positions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (4, 5):
            raise PortfolioFormatError(f"expected 'kind side strike maturity [quantity]', got {raw!r}", lineno)
        try:
            strike, maturity = float(fields[2]), float(fields[3])
            quantity = float(fields[4]) if len(fields) == 5 else 1.0
            positions.append(OptionSpec(fields[0].lower(), strike, maturity, fields[1].lower(), quantity))
        except ValueError as exc:
            raise PortfolioFormatError(str(exc), lineno) from None
    return positions


def load_portfolio(path) -> list[OptionSpec]:
    return parse_portfolio(Path(path).read_text())


def format_portfolio(portfolio: Sequence[OptionSpec]) -> str:
    lines = ["# kind side strike maturity quantity"]
    lines += [f"{o.kind} {o.side} {o.strike:g} {o.maturity:g} {o.quantity:g}" for o in portfolio]
    return "\n".join(lines) + "\n"
