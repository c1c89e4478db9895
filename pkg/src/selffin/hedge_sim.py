"""Monte Carlo discrete hedging of a claim priced by the funding PDE.

Three bookkeeping modes are supported:

``correct``
    Hold ``Delta`` units of a zero-price repo position, one unit of the
    collateral account and one unit of the funding account. All gains
    accrue through those three assets and every rebalancing is absorbed by
    the funding account, so the strategy is self-financing to rounding.
``erroneous_star``
    Hold ``Delta`` shares marked at ``S`` plus cash updated by
    ``d(cash) = dV - Delta dS``. The marked portfolio drifts away from the
    booked value by the accumulated rebalancing cost.
``erroneous_constant_delta``
    The correct ledger with ``Delta`` frozen at its initial value.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri

from . import ledger
from .errors import DomainError
from .funding_pde import MarketParams, PdeSolution

CHUNK_PATHS = 2048


class EngineMode(str, enum.Enum):
    CORRECT = "correct"
    ERRONEOUS_STAR = "erroneous_star"
    ERRONEOUS_CONSTANT_DELTA = "erroneous_constant_delta"


@dataclass(frozen=True)
class PathSpec:
    """Simulation size, seed and market.

    ``drift`` is the real-world drift of the asset; ``None`` means
    ``r_R - r_D``. Replication never reads it.
    """

    n_paths: int
    n_steps: int
    seed: int
    params: MarketParams
    drift: float | None = None

    def __post_init__(self) -> None:
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError(f"n_paths must be an integer >= 1, got {self.n_paths}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be an integer in [0, 2^64), got {self.seed}")
        if self.drift is not None and not math.isfinite(self.drift):
            raise DomainError(f"drift must be finite, got {self.drift}")

    @property
    def mu(self) -> float:
        return self.params.carry if self.drift is None else self.drift

    @property
    def dt(self) -> float:
        return self.params.horizon / self.n_steps


def standard_normals(seed: int, n_steps: int, paths: Iterable[int]) -> np.ndarray:
    """Normal variates fixed by ``(seed, path index, step index)``.

    Each path reads its own Philox counter block, so any subset of paths can
    be generated independently and in any order.
    """
    rows = []
    for path in paths:
        bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(path), 0])
        raw = bitgen.random_raw(n_steps)
        rows.append(((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53)
    uniforms = np.array(rows).reshape(-1, n_steps)
    return ndtri(uniforms)


def simulate_gbm_paths(spec: PathSpec, paths: Sequence[int] | None = None) -> np.ndarray:
    """Exact lognormal paths of shape ``(n_paths, n_steps + 1)``."""
    if paths is None:
        paths = range(spec.n_paths)
    p = spec.params
    z = standard_normals(spec.seed, spec.n_steps, paths)
    dt = spec.dt
    log_steps = (spec.mu - 0.5 * p.sigma**2) * dt + p.sigma * math.sqrt(dt) * z
    log_paths = np.concatenate(
        [np.zeros((z.shape[0], 1)), np.cumsum(log_steps, axis=1)], axis=1
    )
    return p.spot * np.exp(log_paths)


@dataclass(frozen=True)
class HedgeReport:
    """Per-path outcome of one hedging run.

    Attributes
    ----------
    pnl : ndarray
        Terminal portfolio value minus payoff.
    ledger_residual_max : ndarray
        Largest absolute self-financing residual of the booked strategy.
    leakage_total : ndarray
        Accumulated rebalancing cost of the risky position, which equals
        the marked portfolio value minus the booked value.
    hedge_ratios : ndarray
        Risky-asset position at every hedge date.
    """

    mode: EngineMode
    n_steps: int
    pnl: np.ndarray
    ledger_residual_max: np.ndarray
    leakage_total: np.ndarray
    hedge_ratios: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.pnl.size

    @property
    def stats(self) -> dict[str, float]:
        return summary_stats(self.pnl)

    def summary(self) -> dict:
        return {
            "mode": self.mode.value,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "pnl": self.stats,
            "ledger_residual_max": float(np.max(self.ledger_residual_max)),
            "leakage_abs_mean": math.fsum(np.abs(self.leakage_total)) / self.n_paths,
        }

    def write_paths_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("path,pnl,ledger_residual_max,leakage_total\n")
            for i, row in enumerate(
                zip(self.pnl, self.ledger_residual_max, self.leakage_total)
            ):
                fh.write(f"{i}," + ",".join(format(x, ".12g") for x in row) + "\n")


def summary_stats(pnl: np.ndarray) -> dict[str, float]:
    # fsum keeps the reduction independent of how paths were chunked
    pnl = np.asarray(pnl, dtype=float).ravel()
    n = pnl.size
    if n == 0:
        raise DomainError("no paths to summarise")
    mean = math.fsum(pnl) / n
    std = math.sqrt(math.fsum((pnl - mean) ** 2) / (n - 1)) if n > 1 else 0.0
    return {"mean": mean, "std": std, "stderr": std / math.sqrt(n)}


@dataclass(frozen=True)
class _PathState:
    times: np.ndarray
    spots: np.ndarray
    values: np.ndarray
    deltas: np.ndarray


def _evaluate(solution: PdeSolution, paths: np.ndarray, offset: int = 0) -> _PathState:
    n_steps = paths.shape[1] - 1
    times = np.linspace(0.0, solution.params.horizon, n_steps + 1)
    bad = np.flatnonzero(
        np.any((paths < solution.spots[0]) | (paths > solution.s_max) | ~np.isfinite(paths), axis=1)
    )
    if bad.size:
        raise DomainError(
            f"path {offset + bad[0]} leaves the solution grid [0, {solution.s_max:g}]; "
            "increase s_max_multiple"
        )
    values = np.empty_like(paths)
    deltas = np.empty_like(paths)
    for k, t in enumerate(times):
        values[:, k] = solution.price_at(t, paths[:, k])
        deltas[:, k] = solution.delta_at(t, paths[:, k])
    return _PathState(times, paths, values, deltas)


def _correct_ledger(
    solution: PdeSolution, state: _PathState, hedge: np.ndarray
) -> tuple[ledger.StrategyPath, np.ndarray, np.ndarray]:
    """Repo / collateral / funding strategy; returns it with collateral and funding."""
    p = solution.params
    dt = np.diff(state.times)
    s = state.spots
    collateral = solution.policy.collateral(state.values)

    wealth = np.empty_like(s)
    wealth[:, 0] = state.values[:, 0]
    repo_gain = np.diff(s, axis=1) + (p.r_d - p.r_r) * s[:, :-1] * dt
    for k in range(s.shape[1] - 1):
        funding_k = wealth[:, k] - collateral[:, k]
        wealth[:, k + 1] = (
            wealth[:, k]
            + hedge[:, k] * repo_gain[:, k]
            + p.r_c * collateral[:, k] * dt[k]
            + p.r_f * funding_k * dt[k]
        )
    funding = wealth - collateral

    grid = ledger.TimeGrid(state.times)
    assets = (
        ledger.make_asset(np.zeros_like(s), repo_gain, grid, "repo"),
        ledger.make_asset(
            collateral, p.r_c * collateral[:, :-1] * dt - np.diff(collateral, axis=1), grid, "collateral"
        ),
        ledger.make_asset(
            funding, p.r_f * funding[:, :-1] * dt - np.diff(funding, axis=1), grid, "funding"
        ),
    )
    ones = np.ones_like(s)
    positions = np.stack([hedge, ones, ones], axis=-1)
    return ledger.StrategyPath(positions, assets, grid), collateral, funding


def _star_ledger(state: _PathState) -> ledger.StrategyPath:
    """Shares marked at S plus cash updated by dV - Delta dS."""
    s, v, hedge = state.spots, state.values, state.deltas
    step = np.diff(v, axis=1) - hedge[:, :-1] * np.diff(s, axis=1)
    cash0 = v[:, :1] - hedge[:, :1] * s[:, :1]
    cash = np.concatenate([cash0, cash0 + np.cumsum(step, axis=1)], axis=1)
    grid = ledger.TimeGrid(state.times)
    no_flows = np.zeros((s.shape[0], s.shape[1] - 1))
    assets = (
        ledger.make_asset(s, no_flows, grid, "stock"),
        ledger.make_asset(np.ones_like(s), no_flows, grid, "cash"),
    )
    return ledger.StrategyPath(np.stack([hedge, cash], axis=-1), assets, grid)


def _hedge_ratios(state: _PathState, mode: EngineMode) -> np.ndarray:
    if mode is EngineMode.ERRONEOUS_CONSTANT_DELTA:
        return np.repeat(state.deltas[:, :1], state.deltas.shape[1], axis=1)
    return state.deltas


def replication_strategy(
    solution: PdeSolution, paths: np.ndarray, mode: EngineMode | str = EngineMode.CORRECT
) -> ledger.StrategyPath:
    """The strategy a mode books along ``paths``, as a batched ledger object.

    Asset order is (repo, collateral, funding) for the correct ledgers and
    (stock, cash) for ``erroneous_star``.
    """
    mode = EngineMode(mode)
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    state = _evaluate(solution, paths)
    if mode is EngineMode.ERRONEOUS_STAR:
        return _star_ledger(state)
    return _correct_ledger(solution, state, _hedge_ratios(state, mode))[0]


def cash_recast(
    solution: PdeSolution, paths: np.ndarray, mode: EngineMode | str = EngineMode.CORRECT
) -> tuple[ledger.StrategyPath, int]:
    """The correct ledger rewritten with the repo split into stock and cash.

    The repo position becomes ``Delta`` shares (price ``S``, dividends at
    ``r_D``) plus a cash account growing at ``r_R`` that holds ``-Delta S``.
    Returns the four-asset strategy (stock, collateral, funding, cash) and
    the index of the cash asset.
    """
    mode = EngineMode(mode)
    if mode is EngineMode.ERRONEOUS_STAR:
        raise DomainError("cash recast applies to the correct ledgers only")
    p = solution.params
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    state = _evaluate(solution, paths)
    hedge = _hedge_ratios(state, mode)
    base, collateral, funding = _correct_ledger(solution, state, hedge)
    grid = base.grid
    dt = np.diff(state.times)
    s = state.spots
    account = np.concatenate([[1.0], np.cumprod(1.0 + p.r_r * dt)])
    units = -hedge * s / account
    assets = (
        ledger.make_asset(s, p.r_d * s[:, :-1] * dt, grid, "stock"),
        base.assets[1],
        base.assets[2],
        ledger.make_asset(account, np.zeros_like(dt), grid, "cash"),
    )
    ones = np.ones_like(s)
    positions = np.stack([hedge, ones, ones, units], axis=-1)
    return ledger.StrategyPath(positions, assets, grid), 3


def _replicate_chunk(
    solution: PdeSolution, paths: np.ndarray, mode: EngineMode, offset: int
) -> tuple[np.ndarray, ...]:
    state = _evaluate(solution, paths, offset)
    hedge = _hedge_ratios(state, mode)
    if mode is EngineMode.ERRONEOUS_STAR:
        strategy = _star_ledger(state)
    else:
        strategy = _correct_ledger(solution, state, hedge)[0]
    report = ledger.self_financing_residual(strategy)
    terminal = ledger.portfolio_value(strategy)[:, -1]
    pnl = terminal - solution.payoff(paths[:, -1])
    risky = ledger.StrategyPath(strategy.positions[..., :1], strategy.assets[:1], strategy.grid)
    leakage = np.sum(ledger.leibniz_gap(risky), axis=-1)
    return pnl, np.atleast_1d(report.max_abs), leakage, hedge


def replicate(
    solution: PdeSolution,
    paths: np.ndarray,
    mode: EngineMode | str = EngineMode.CORRECT,
    threads: int = 1,
) -> HedgeReport:
    """Run one bookkeeping mode along every path.

    Parameters
    ----------
    solution : PdeSolution
        Supplies the value and hedge ratio at each hedge date.
    paths : ndarray
        Asset prices on a uniform grid over ``[0, horizon]``, shape
        ``(n_paths, n_steps + 1)`` or a single 1-D path.
    mode : EngineMode or str
    threads : int
        Worker threads over path chunks; results do not depend on it.

    Raises
    ------
    DomainError
        If a path leaves the solution grid; the message names the first
        offending path.
    """
    mode = EngineMode(mode)
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    if paths.shape[1] < 2:
        raise DomainError("a path needs at least two dates")
    starts = range(0, paths.shape[0], CHUNK_PATHS)

    def run(start: int) -> tuple[np.ndarray, ...]:
        return _replicate_chunk(solution, paths[start : start + CHUNK_PATHS], mode, start)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(start) for start in starts]
    pnl, resid, leak, hedge = (np.concatenate(col) for col in zip(*parts))
    return HedgeReport(mode, paths.shape[1] - 1, pnl, resid, leak, hedge)


def run_hedge(
    solution: PdeSolution,
    spec: PathSpec,
    modes: Sequence[EngineMode | str] = (EngineMode.CORRECT,),
    threads: int = 1,
) -> dict[EngineMode, HedgeReport]:
    """Simulate once and run every requested mode on the same paths."""
    paths = simulate_gbm_paths(spec)
    return {EngineMode(m): replicate(solution, paths, m, threads) for m in modes}


@dataclass(frozen=True)
class ConvergenceRow:
    n_steps: int
    mean: float
    std: float
    stderr: float
    std_ratio: float | None  # std(n) / std(2n), when 2n is present


def pnl_stats(
    reports: Sequence[HedgeReport], step_counts: Sequence[int] | None = None
) -> list[ConvergenceRow]:
    """P&L statistics by hedge frequency, sorted by step count."""
    if not reports:
        raise DomainError("pnl_stats needs at least one report")
    if step_counts is None:
        step_counts = [r.n_steps for r in reports]
    if len(step_counts) != len(reports):
        raise DomainError("one step count per report is required")
    stats = {int(n): summary_stats(r.pnl) for n, r in zip(step_counts, reports)}
    rows = []
    for n in sorted(stats):
        st = stats[n]
        ratio = None
        if 2 * n in stats and stats[2 * n]["std"] > 0:
            ratio = st["std"] / stats[2 * n]["std"]
        rows.append(ConvergenceRow(n, st["mean"], st["std"], st["stderr"], ratio))
    return rows
