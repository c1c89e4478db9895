"""Independent pricing oracles used to check the finite-difference solver."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .errors import DomainError
from .funding_pde import CollateralPolicy, MarketParams, Payoff, effective_rate


def black_scholes_closed_form(
    spot: float,
    strike: float,
    sigma: float,
    carry_rate: float,
    discount_rate: float,
    horizon: float,
    kind: str = "call",
) -> tuple[float, float]:
    """Lognormal European price and delta.

    The asset grows at ``carry_rate`` and cash flows are discounted at
    ``discount_rate``. ``sigma == 0`` and ``strike == 0`` are handled as
    their deterministic limits.

    Returns
    -------
    (price, delta)
    """
    if kind not in ("call", "put"):
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    if spot <= 0 or horizon <= 0 or sigma < 0 or strike < 0:
        raise DomainError("need spot > 0, horizon > 0, sigma >= 0, strike >= 0")
    growth = math.exp((carry_rate - discount_rate) * horizon)
    df = math.exp(-discount_rate * horizon)
    forward = spot * math.exp(carry_rate * horizon)
    if strike == 0.0 or sigma == 0.0:
        itm = forward > strike if kind == "call" else forward < strike
        if kind == "call":
            price = df * max(forward - strike, 0.0)
            delta = growth if itm else 0.0
        else:
            price = df * max(strike - forward, 0.0)
            delta = -growth if itm else 0.0
        return price, delta

    vol = sigma * math.sqrt(horizon)
    d1 = (math.log(forward / strike) + 0.5 * vol * vol) / vol
    d2 = d1 - vol
    if kind == "call":
        price = spot * growth * ndtr(d1) - strike * df * ndtr(d2)
        delta = growth * ndtr(d1)
    else:
        price = strike * df * ndtr(-d2) - spot * growth * ndtr(-d1)
        delta = -growth * ndtr(-d1)
    return float(price), float(delta)


def binomial_oracle(
    params: MarketParams,
    policy: CollateralPolicy,
    payoff: Payoff,
    steps: int,
) -> float:
    """Cox-Ross-Rubinstein tree price under the collateral-adjusted discount rate.

    Up/down moves are ``exp(+-sigma sqrt(dt))``; the branch probability
    makes the tree drift at ``r_R - r_D`` and each step is discounted at
    ``gamma r_C + (1 - gamma) r_F``.
    """
    if int(steps) != steps or steps < 1:
        raise DomainError(f"steps must be a positive integer, got {steps}")
    dt = params.horizon / steps
    up = math.exp(params.sigma * math.sqrt(dt))
    down = 1.0 / up
    growth = math.exp(params.carry * dt)
    if not down < growth < up:
        raise DomainError(
            f"no-arbitrage condition d < exp(carry dt) < u fails "
            f"({down:.6g}, {growth:.6g}, {up:.6g}); use more steps or a lower carry"
        )
    p = (growth - down) / (up - down)
    disc = math.exp(-effective_rate(params, policy) * dt)

    j = np.arange(steps + 1, dtype=float)
    terminal = params.spot * np.exp(params.sigma * math.sqrt(dt) * (2.0 * j - steps))
    v = np.asarray(payoff(terminal), dtype=float)
    for _ in range(steps):
        v = disc * (p * v[1:] + (1.0 - p) * v[:-1])
    return float(v[0])
