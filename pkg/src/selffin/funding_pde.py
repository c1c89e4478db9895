"""Finite-difference pricing under collateral and unsecured funding.

The value ``V(t, S)`` of a claim hedged through a repo position, a
collateral account ``C`` and a funding account ``V - C`` satisfies

    V_t + 0.5 sigma^2 S^2 V_SS + (r_R - r_D) S V_S - r_C C - r_F (V - C) = 0.

With collateral posted as a fixed fraction ``C = gamma V`` the equation is
linear and reduces to a Black-Scholes equation with carry ``r_R - r_D`` and
discount rate ``gamma r_C + (1 - gamma) r_F``. It is solved backwards in time
with a theta scheme on a uniform grid in ``S``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, NumericError

PolicyKind = Literal["none", "full", "fraction"]
PayoffKind = Literal["call", "put", "custom"]


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class MarketParams:
    """Constant market inputs.

    Attributes
    ----------
    sigma : float
        Volatility of the risky asset.
    r_d : float
        Dividend yield of the risky asset.
    r_r : float
        Repo rate financing the risky asset.
    r_c : float
        Rate paid on collateral.
    r_f : float
        Unsecured funding rate.
    spot : float
        Initial asset price.
    horizon : float
        Maturity in years.
    """

    sigma: float
    r_d: float
    r_r: float
    r_c: float
    r_f: float
    spot: float
    horizon: float

    def __post_init__(self) -> None:
        for name in ("sigma", "r_d", "r_r", "r_c", "r_f", "spot", "horizon"):
            _require_finite(name, getattr(self, name))
        if self.sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")
        if self.spot <= 0:
            raise DomainError(f"spot must be > 0, got {self.spot}")
        if self.horizon <= 0:
            raise DomainError(f"horizon must be > 0, got {self.horizon}")

    @property
    def carry(self) -> float:
        """Drift of the asset under the hedging measure, ``r_R - r_D``."""
        return self.r_r - self.r_d


@dataclass(frozen=True)
class CollateralPolicy:
    """Collateral posted as a fraction of the claim value.

    ``none`` posts nothing, ``full`` posts the whole value and ``fraction``
    posts ``gamma`` times the value.
    """

    kind: PolicyKind = "none"
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("none", "full", "fraction"):
            raise DomainError(f"unknown collateral policy {self.kind!r}")
        if self.kind == "fraction":
            if self.gamma is None:
                raise DomainError("fraction policy requires gamma")
            _require_finite("gamma", self.gamma)
            if not 0.0 <= self.gamma <= 1.0:
                raise DomainError(f"gamma must lie in [0, 1], got {self.gamma}")

    @property
    def weight(self) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "full":
            return 1.0
        return float(self.gamma)

    def collateral(self, value: np.ndarray | float) -> np.ndarray | float:
        return self.weight * value


def effective_rate(params: MarketParams, policy: CollateralPolicy) -> float:
    """Discount rate of the linear equation obtained by substituting ``C = gamma V``."""
    gamma = policy.weight
    return gamma * params.r_c + (1.0 - gamma) * params.r_f


@dataclass(frozen=True)
class Payoff:
    """Terminal value as a function of the asset price.

    ``custom_values`` is a two-column table ``(S, value)``, interpolated
    linearly and extrapolated along its end segments.
    """

    kind: PayoffKind = "call"
    strike: float | None = None
    custom_values: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.kind in ("call", "put"):
            if self.strike is None:
                raise DomainError(f"{self.kind} payoff requires a strike")
            _require_finite("strike", self.strike)
            if self.strike < 0:
                raise DomainError(f"strike must be >= 0, got {self.strike}")
        elif self.kind == "custom":
            if self.custom_values is None:
                raise DomainError("custom payoff requires custom_values")
            table = np.asarray(self.custom_values, dtype=float)
            if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
                raise DomainError("custom_values must be at least two (S, value) pairs")
            if not np.all(np.isfinite(table)):
                raise DomainError("custom_values contain non-finite entries")
            if np.any(np.diff(table[:, 0]) <= 0):
                raise DomainError("custom_values must be sorted by strictly increasing S")
            object.__setattr__(
                self, "custom_values", tuple(map(tuple, table.tolist()))
            )
        else:
            raise DomainError(f"unknown payoff kind {self.kind!r}")

    def __call__(self, s: np.ndarray | float) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "call":
            return np.maximum(s - self.strike, 0.0)
        if self.kind == "put":
            return np.maximum(self.strike - s, 0.0)
        table = np.asarray(self.custom_values)
        x, y = table[:, 0], table[:, 1]
        out = np.interp(s, x, y)
        lo_slope = (y[1] - y[0]) / (x[1] - x[0])
        hi_slope = (y[-1] - y[-2]) / (x[-1] - x[-2])
        out = np.where(s < x[0], y[0] + lo_slope * (s - x[0]), out)
        return np.where(s > x[-1], y[-1] + hi_slope * (s - x[-1]), out)

    @property
    def reference_level(self) -> float | None:
        return self.strike if self.kind in ("call", "put") else None


@dataclass(frozen=True)
class GridSpec:
    """Finite-difference lattice and time-stepping scheme.

    ``scheme_theta`` is 0 for explicit, 0.5 for Crank-Nicolson and 1 for
    fully implicit stepping. The first ``rannacher_steps`` steps are always
    fully implicit to damp the payoff kink.
    """

    s_nodes: int = 400
    t_steps: int = 400
    s_max_multiple: float = 5.0
    scheme_theta: float = 0.5
    rannacher_steps: int = 2

    def __post_init__(self) -> None:
        if int(self.s_nodes) != self.s_nodes or self.s_nodes < 3:
            raise DomainError(f"s_nodes must be an integer >= 3, got {self.s_nodes}")
        if int(self.t_steps) != self.t_steps or self.t_steps < 1:
            raise DomainError(f"t_steps must be an integer >= 1, got {self.t_steps}")
        _require_finite("s_max_multiple", self.s_max_multiple)
        if self.s_max_multiple < 3:
            raise DomainError(f"s_max_multiple must be >= 3, got {self.s_max_multiple}")
        _require_finite("scheme_theta", self.scheme_theta)
        if not 0.0 <= self.scheme_theta <= 1.0:
            raise DomainError(f"scheme_theta must lie in [0, 1], got {self.scheme_theta}")
        if self.rannacher_steps < 0:
            raise DomainError("rannacher_steps must be >= 0")


def _interp_surface(
    times: np.ndarray,
    spots: np.ndarray,
    surface: np.ndarray,
    t: float,
    s: np.ndarray | float,
) -> np.ndarray:
    """Bilinear interpolation of ``surface[time, spot]`` at one time, many spots."""
    t_lo, t_hi = times[0], times[-1]
    slack = 1e-12 * max(1.0, t_hi)
    if not t_lo - slack <= t <= t_hi + slack:
        raise DomainError(f"t={t} outside solution domain [{t_lo}, {t_hi}]")
    s = np.asarray(s, dtype=float)
    s_lo, s_hi = spots[0], spots[-1]
    if np.any(~np.isfinite(s)) or np.any(s < s_lo) or np.any(s > s_hi):
        raise DomainError(f"S outside solution domain [{s_lo}, {s_hi}]")
    t = min(max(t, t_lo), t_hi)
    j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    w = (t - times[j]) / (times[j + 1] - times[j])
    row = surface[j] if w == 0.0 else (1.0 - w) * surface[j] + w * surface[j + 1]
    return np.interp(s, spots, row)


@dataclass(frozen=True)
class PdeSolution:
    """Value and hedge-ratio surfaces on the ``(t, S)`` lattice.

    ``values[j, i]`` is the claim value at calendar time ``times[j]`` and
    asset price ``spots[i]``.
    """

    times: np.ndarray
    spots: np.ndarray
    values: np.ndarray
    deltas: np.ndarray
    params: MarketParams
    policy: CollateralPolicy
    payoff: Payoff

    @property
    def s_max(self) -> float:
        return float(self.spots[-1])

    @property
    def price(self) -> float:
        return float(self.price_at(0.0, self.params.spot))

    @property
    def delta_at_spot(self) -> float:
        return float(self.delta_at(0.0, self.params.spot))

    def price_at(self, t: float, s: np.ndarray | float) -> np.ndarray | float:
        out = _interp_surface(self.times, self.spots, self.values, t, s)
        return float(out) if out.ndim == 0 else out

    def delta_at(self, t: float, s: np.ndarray | float) -> np.ndarray | float:
        out = _interp_surface(self.times, self.spots, self.deltas, t, s)
        return float(out) if out.ndim == 0 else out

    def write_surface_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "S", "V", "delta"])
            for j, t in enumerate(self.times):
                for i, s in enumerate(self.spots):
                    writer.writerow(
                        [
                            format(t, ".12g"),
                            format(s, ".12g"),
                            format(self.values[j, i], ".12g"),
                            format(self.deltas[j, i], ".12g"),
                        ]
                    )


def price_at(solution: PdeSolution, t: float, s: float) -> float:
    """Bilinearly interpolated value at ``(t, s)``."""
    return solution.price_at(t, s)


def delta_surface(solution: PdeSolution) -> np.ndarray:
    """Hedge ratio ``dV/dS``: central differences inside, one-sided at the edges."""
    return np.gradient(solution.values, solution.spots, axis=1)


def _spot_grid(params: MarketParams, payoff: Payoff, grid: GridSpec) -> np.ndarray:
    # Spacing is snapped so that spot is a node and S_max >= the nominal bound.
    reference = max(params.spot, payoff.reference_level or params.spot)
    s_nominal = grid.s_max_multiple * reference
    n = grid.s_nodes
    j_spot = math.floor(params.spot * (n - 1) / s_nominal)
    if j_spot < 1:
        raise DomainError(
            f"grid too coarse to bracket spot: {n} nodes over [0, {s_nominal:g}]"
        )
    ds = params.spot / j_spot
    spots = ds * np.arange(n, dtype=float)
    spots[j_spot] = params.spot
    return spots


def _boundary_values(
    payoff: Payoff, s_max: float, ds: float, carry: float, rate: float, tau: float
) -> tuple[float, float]:
    lower = float(payoff(0.0)) * math.exp(-rate * tau)
    top = float(payoff(s_max))
    slope = (top - float(payoff(s_max - ds))) / ds
    upper = slope * s_max * math.exp((carry - rate) * tau) + (top - slope * s_max) * math.exp(
        -rate * tau
    )
    return lower, upper


def solve_funding_pde(
    params: MarketParams,
    policy: CollateralPolicy,
    payoff: Payoff,
    grid: GridSpec | None = None,
) -> PdeSolution:
    """Solve the funding-adjusted pricing equation backwards from maturity.

    Parameters
    ----------
    params, policy, payoff
        Market inputs, collateral policy and terminal payoff.
    grid : GridSpec, optional
        Lattice and scheme; defaults to 400 x 400 Crank-Nicolson with two
        implicit start-up steps.

    Returns
    -------
    PdeSolution
        Value and delta surfaces. The terminal slice equals the payoff at
        every node.

    Raises
    ------
    DomainError
        If the grid cannot bracket the spot.
    NumericError
        If the linear solves produce non-finite values.
    """
    grid = grid or GridSpec()
    spots = _spot_grid(params, payoff, grid)
    ds = spots[1] - spots[0]
    s_max = spots[-1]
    horizon = params.horizon
    m = grid.t_steps
    dt = horizon / m
    times = np.linspace(0.0, horizon, m + 1)
    carry = params.carry
    rate = effective_rate(params, policy)

    idx = np.arange(1, grid.s_nodes - 1, dtype=float)
    diffusion = 0.5 * params.sigma**2 * idx**2
    convection = 0.5 * carry * idx
    lower = diffusion - convection
    diag = -2.0 * diffusion - rate
    upper = diffusion + convection

    theta = grid.scheme_theta
    if theta < 0.5:
        bound = dt * (2.0 * diffusion[-1] + abs(rate))
        if bound * (1.0 - 2.0 * theta) > 1.0:
            warnings.warn(
                f"theta={theta} step violates the stability bound "
                f"({bound:.3g} * {1 - 2 * theta:.3g} > 1); expect oscillations",
                RuntimeWarning,
                stacklevel=2,
            )

    values = np.empty((m + 1, grid.s_nodes))
    values[m] = payoff(spots)
    v = values[m].copy()
    for step in range(m):
        th = 1.0 if step < grid.rannacher_steps else theta
        tau_new = (step + 1) * dt
        lo_new, hi_new = _boundary_values(payoff, s_max, ds, carry, rate, tau_new)

        rhs = v[1:-1].copy()
        if th < 1.0:
            rhs += (1.0 - th) * dt * (lower * v[:-2] + diag * v[1:-1] + upper * v[2:])
        rhs[0] += th * dt * lower[0] * lo_new
        rhs[-1] += th * dt * upper[-1] * hi_new

        bands = np.zeros((3, idx.size))
        bands[0, 1:] = -th * dt * upper[:-1]
        bands[1] = 1.0 - th * dt * diag
        bands[2, :-1] = -th * dt * lower[1:]
        interior = solve_banded((1, 1), bands, rhs, check_finite=False)

        v = np.concatenate(([lo_new], interior, [hi_new]))
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite values after time step {step + 1}")
        values[m - step - 1] = v

    deltas = np.gradient(values, spots, axis=1)
    for arr in (times, spots, values, deltas):
        arr.setflags(write=False)
    return PdeSolution(times, spots, values, deltas, params, policy, payoff)


def forward_payoff(strike: float, s_max: float) -> Payoff:
    """Linear payoff ``S - strike`` tabulated over ``[0, s_max]``."""
    return Payoff("custom", custom_values=((0.0, -strike), (s_max, s_max - strike)))


def price_grid(
    params: MarketParams,
    policy: CollateralPolicy,
    payoff: Payoff,
    grid: GridSpec | None = None,
) -> float:
    """Shortcut returning only the value at ``(0, spot)``."""
    return solve_funding_pde(params, policy, payoff, grid).price


def sweep(
    params: MarketParams,
    policy: CollateralPolicy,
    payoff: Payoff,
    field: str,
    values: Sequence[float],
    grid: GridSpec | None = None,
) -> list[float]:
    """Prices obtained by varying one market field over ``values``."""
    return [
        price_grid(replace(params, **{field: v}), policy, payoff, grid) for v in values
    ]
