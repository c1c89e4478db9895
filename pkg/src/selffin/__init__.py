"""Self-financing strategy bookkeeping, funding-adjusted PDE pricing and
discrete hedging simulation."""

from .errors import DomainError, GridMismatchError, NumericError, SelfFinError
from .funding_pde import (
    CollateralPolicy,
    GridSpec,
    MarketParams,
    Payoff,
    PdeSolution,
    delta_surface,
    price_at,
    solve_funding_pde,
)
from .hedge_sim import (
    EngineMode,
    HedgeReport,
    PathSpec,
    pnl_stats,
    replicate,
    simulate_gbm_paths,
)
from .ledger import (
    AssetProcess,
    ResidualReport,
    StrategyPath,
    TimeGrid,
    bk_subportfolio_check,
    leibniz_gap,
    make_asset,
    portfolio_gain_increments,
    portfolio_value,
    self_financing_residual,
)
from .oracles import binomial_oracle, black_scholes_closed_form

__version__ = "0.1.0"

__all__ = [
    "AssetProcess",
    "CollateralPolicy",
    "DomainError",
    "EngineMode",
    "GridMismatchError",
    "GridSpec",
    "HedgeReport",
    "MarketParams",
    "NumericError",
    "PathSpec",
    "Payoff",
    "PdeSolution",
    "ResidualReport",
    "SelfFinError",
    "StrategyPath",
    "TimeGrid",
    "binomial_oracle",
    "bk_subportfolio_check",
    "black_scholes_closed_form",
    "delta_surface",
    "leibniz_gap",
    "make_asset",
    "pnl_stats",
    "portfolio_gain_increments",
    "portfolio_value",
    "price_at",
    "replicate",
    "self_financing_residual",
    "simulate_gbm_paths",
    "solve_funding_pde",
]
