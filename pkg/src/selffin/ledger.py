"""Discrete-time bookkeeping for assets and trading strategies.

An asset is a (price, dividend, gain) triple with ``gain = price + dividend``.
A strategy holds ``positions[k]`` units over ``(t_k, t_{k+1}]``; trades that
move it to ``positions[k + 1]`` execute at ``t_{k+1}`` prices.

Every array here keeps time on a fixed axis (last axis for series, second
to last for position vectors) and treats any leading axes as independent
paths, so a whole Monte Carlo batch can be booked in one call.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, GridMismatchError

DEFAULT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation instants in years, starting at 0."""

    times: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise DomainError("a time grid needs at least 2 instants")
        if not np.all(np.isfinite(times)):
            raise DomainError("time grid contains non-finite values")
        if times[0] != 0.0:
            raise DomainError(f"time grid must start at 0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise DomainError("time grid must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> TimeGrid:
        return cls(np.linspace(0.0, horizon, n_steps + 1))

    def __len__(self) -> int:
        return self.times.size

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class AssetProcess:
    """Price and accumulated dividend series of one asset.

    The gain series is never stored; it is always ``price + dividend``.
    """

    price: np.ndarray
    dividend: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        price = np.asarray(self.price, dtype=float)
        dividend = np.asarray(self.dividend, dtype=float)
        if price.shape[-1:] != dividend.shape[-1:]:
            raise GridMismatchError(
                f"asset {self.name!r}: price has {price.shape[-1]} points, "
                f"dividend has {dividend.shape[-1]}"
            )
        if np.any(dividend[..., 0] != 0.0):
            raise DomainError(f"asset {self.name!r}: dividend must start at 0")
        object.__setattr__(self, "price", price)
        object.__setattr__(self, "dividend", dividend)

    @property
    def gain(self) -> np.ndarray:
        return self.price + self.dividend

    def __len__(self) -> int:
        return self.price.shape[-1]


def make_asset(
    price: np.ndarray | Sequence[float],
    dividend_increments: np.ndarray | Sequence[float],
    grid: TimeGrid | None = None,
    name: str = "",
) -> AssetProcess:
    """Build an asset from its price series and per-step dividend cash flows.

    ``dividend_increments[k]`` is paid over ``(t_k, t_{k+1}]``, so it has one
    entry fewer than ``price``. The accumulated dividend starts at 0.
    """
    price = np.asarray(price, dtype=float)
    increments = np.asarray(dividend_increments, dtype=float)
    if price.ndim == 0 or increments.ndim == 0:
        raise DomainError("price and dividend increments must be series")
    if increments.shape[-1] != price.shape[-1] - 1:
        raise GridMismatchError(
            f"{price.shape[-1]} prices need {price.shape[-1] - 1} dividend "
            f"increments, got {increments.shape[-1]}"
        )
    if grid is not None and price.shape[-1] != len(grid):
        raise GridMismatchError(
            f"price series has {price.shape[-1]} points, grid has {len(grid)}"
        )
    if not (np.all(np.isfinite(price)) and np.all(np.isfinite(increments))):
        raise DomainError(f"asset {name!r}: non-finite input")
    zeros = np.zeros(increments.shape[:-1] + (1,))
    dividend = np.concatenate([zeros, np.cumsum(increments, axis=-1)], axis=-1)
    return AssetProcess(price, dividend, name)


@dataclass(frozen=True)
class StrategyPath:
    """Positions in an ordered list of assets.

    ``positions`` has shape ``(..., K + 1, n_assets)``; leading axes index
    independent paths and broadcast against the asset series.
    """

    positions: np.ndarray
    assets: tuple[AssetProcess, ...]
    grid: TimeGrid | None = None

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=float)
        assets = tuple(self.assets)
        if not assets:
            raise DomainError("a strategy needs at least one asset")
        if positions.ndim < 2 or positions.shape[-1] != len(assets):
            raise GridMismatchError(
                f"positions of shape {positions.shape} do not match "
                f"{len(assets)} assets"
            )
        n_times = positions.shape[-2]
        if n_times < 2:
            raise DomainError("a strategy needs at least 2 instants")
        for asset in assets:
            if len(asset) != n_times:
                raise GridMismatchError(
                    f"asset {asset.name!r} has {len(asset)} points, "
                    f"positions have {n_times}"
                )
        if self.grid is not None and len(self.grid) != n_times:
            raise GridMismatchError(
                f"positions have {n_times} points, grid has {len(self.grid)}"
            )
        if not np.all(np.isfinite(positions)):
            raise DomainError("positions contain non-finite values")
        try:
            np.broadcast_shapes(
                positions.shape[:-1], *(a.price.shape for a in assets)
            )
        except ValueError as exc:
            raise GridMismatchError(f"path axes do not broadcast: {exc}") from None
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "assets", assets)

    def _stack(self, attr: str) -> np.ndarray:
        series = np.broadcast_arrays(*(getattr(a, attr) for a in self.assets))
        return np.stack(series, axis=-1)

    @property
    def prices(self) -> np.ndarray:
        return self._stack("price")

    @property
    def gains(self) -> np.ndarray:
        return self._stack("gain")

    @property
    def dividends(self) -> np.ndarray:
        return self._stack("dividend")

    def without(self, index: int) -> StrategyPath:
        """The sub-strategy obtained by dropping one asset."""
        keep = [i for i in range(len(self.assets)) if i != index]
        return StrategyPath(
            self.positions[..., keep],
            tuple(self.assets[i] for i in keep),
            self.grid,
        )


@dataclass(frozen=True)
class ResidualReport:
    """Per-step self-financing residuals and their verdict.

    For batched strategies ``max_abs`` and ``is_self_financing`` are arrays
    with one entry per path.
    """

    residuals: np.ndarray
    tolerance: float
    max_abs: np.ndarray | float = field(init=False)
    is_self_financing: np.ndarray | bool = field(init=False)

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise DomainError(f"tolerance must be positive, got {self.tolerance}")
        residuals = np.asarray(self.residuals, dtype=float)
        max_abs = np.max(np.abs(residuals), axis=-1)
        ok = max_abs <= self.tolerance
        if max_abs.ndim == 0:
            max_abs, ok = float(max_abs), bool(ok)
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "max_abs", max_abs)
        object.__setattr__(self, "is_self_financing", ok)

    def to_dict(self) -> dict:
        return {
            "residuals": self.residuals.tolist(),
            "max_abs": np.asarray(self.max_abs).tolist(),
            "is_self_financing": np.asarray(self.is_self_financing).tolist(),
            "tolerance": self.tolerance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def portfolio_value(strategy: StrategyPath) -> np.ndarray:
    """Mark-to-market value ``sum_i positions_i * price_i`` at every instant."""
    return np.sum(strategy.positions * strategy.prices, axis=-1)


def portfolio_gain_increments(strategy: StrategyPath) -> np.ndarray:
    """Per-step strategy gains, earned by the positions set at the step start."""
    d_gain = np.diff(strategy.gains, axis=-2)
    return np.sum(strategy.positions[..., :-1, :] * d_gain, axis=-1)


def self_financing_residual(
    strategy: StrategyPath, tolerance: float = DEFAULT_TOLERANCE
) -> ResidualReport:
    """Change in portfolio value minus portfolio gain, step by step.

    A zero residual everywhere means no cash entered or left the strategy.
    """
    if not tolerance > 0:
        raise DomainError(f"tolerance must be positive, got {tolerance}")
    d_value = np.diff(portfolio_value(strategy), axis=-1)
    return ResidualReport(d_value - portfolio_gain_increments(strategy), tolerance)


def leibniz_gap(strategy: StrategyPath) -> np.ndarray:
    """Rebalancing cost ``sum_i P_i(t_{k+1}) * (theta_i(t_{k+1}) - theta_i(t_k))``.

    This is exactly ``d(theta . P) - theta . dP`` on each step, the amount
    that treating the price-only product rule as exact silently drops.
    """
    d_theta = np.diff(strategy.positions, axis=-2)
    return np.sum(strategy.prices[..., 1:, :] * d_theta, axis=-1)


def bk_subportfolio_check(
    strategy: StrategyPath,
    cash_index: int,
    tolerance: float = DEFAULT_TOLERANCE,
) -> ResidualReport:
    """Self-financing residual of the strategy with its cash asset removed.

    If both the full portfolio and the portfolio excluding cash were
    self-financing, this report would be identically zero. Any rebalancing
    of a non-zero-price asset makes it non-zero.
    """
    n = len(strategy.assets)
    if not -n <= cash_index < n:
        raise DomainError(f"cash_index {cash_index} out of range for {n} assets")
    if n < 2:
        raise DomainError("removing the cash asset would leave no assets")
    return self_financing_residual(strategy.without(cash_index % n), tolerance)


def write_series_csv(path: str | Path, times: Sequence[float], values: Sequence[float]) -> None:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise GridMismatchError("times and values must be 1-D series of equal length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "value"])
        for t, v in zip(times, values):
            writer.writerow([format(t, ".12g"), format(v, ".12g")])


def read_series_csv(path: str | Path) -> tuple[TimeGrid, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
        raise DomainError(f"{path}: expected header 't,value'")
    try:
        data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 2:
        raise DomainError(f"{path}: every row needs exactly two columns")
    return TimeGrid(data[:, 0]), data[:, 1]
