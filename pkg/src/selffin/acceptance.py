"""Acceptance criteria, runnable from the CLI (``selffin verify``) and pytest.

Every check uses fixed seeds and prints only deterministic quantities, so
two runs on the same machine produce identical reports. Wall-clock limits
are reported as pass/fail without the measured time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, TextIO

import numpy as np

from . import ledger
from .funding_pde import (
    CollateralPolicy,
    GridSpec,
    MarketParams,
    Payoff,
    solve_funding_pde,
)
from .hedge_sim import (
    EngineMode,
    PathSpec,
    cash_recast,
    pnl_stats,
    replicate,
    replication_strategy,
    simulate_gbm_paths,
)
from .oracles import binomial_oracle, black_scholes_closed_form

SEED = 271828

BS_MARKET = MarketParams(sigma=0.2, r_d=0.0, r_r=0.05, r_c=0.05, r_f=0.05, spot=100.0, horizon=1.0)
DESK_MARKET = MarketParams(sigma=0.25, r_d=0.03, r_r=0.02, r_c=0.01, r_f=0.04, spot=100.0, horizon=1.0)
CALL = Payoff("call", 100.0)
PUT = Payoff("put", 100.0)
POLICIES = (
    CollateralPolicy("none"),
    CollateralPolicy("fraction", 0.5),
    CollateralPolicy("full"),
)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail}"


def _bs_reference() -> float:
    return black_scholes_closed_form(100.0, 100.0, 0.2, 0.05, 0.05, 1.0)[0]


def black_scholes_collapse() -> CriterionResult:
    start = time.perf_counter()
    price = solve_funding_pde(BS_MARKET, POLICIES[0], CALL, GridSpec(400, 400)).price
    elapsed = time.perf_counter() - start
    ref = _bs_reference()
    rel = abs(price - ref) / ref
    fast = elapsed < 1.0
    return CriterionResult(
        1,
        "Black-Scholes collapse",
        rel < 1e-3 and fast,
        f"pde={price:.6f} closed={ref:.6f} rel_err={rel:.2e} (<1e-3), runtime<1s={fast}",
    )


def oracle_equivalence() -> CriterionResult:
    worst = 0.0
    parts = []
    for payoff in (CALL, PUT):
        for policy in POLICIES:
            pde = solve_funding_pde(DESK_MARKET, policy, payoff).price
            tree = binomial_oracle(DESK_MARKET, policy, payoff, 2000)
            rel = abs(pde - tree) / abs(tree)
            worst = max(worst, rel)
            parts.append(f"{payoff.kind}/{policy.kind}={rel:.1e}")
    return CriterionResult(
        2,
        "Oracle equivalence",
        worst < 1e-3,
        f"max rel_err={worst:.2e} (<1e-3) [{', '.join(parts)}]",
    )


def collateral_invariance() -> CriterionResult:
    equal = replace(DESK_MARKET, r_c=0.03, r_f=0.03)
    prices = [solve_funding_pde(equal, p, CALL).price for p in POLICIES]
    spread = max(prices) - min(prices)
    full = solve_funding_pde(DESK_MARKET, POLICIES[2], CALL).price
    none = solve_funding_pde(DESK_MARKET, POLICIES[0], CALL).price
    ok = spread < 1e-8 and full > none
    return CriterionResult(
        3,
        "Collateral invariance",
        ok,
        f"spread(r_C=r_F)={spread:.1e} (<1e-8); full={full:.6f} > none={none:.6f}",
    )


def _desk_paths(n_paths: int = 1000, n_steps: int = 250) -> tuple:
    solution = solve_funding_pde(DESK_MARKET, POLICIES[1], CALL)
    paths = simulate_gbm_paths(PathSpec(n_paths, n_steps, SEED, DESK_MARKET))
    return solution, paths


def ledger_exactness() -> CriterionResult:
    solution, paths = _desk_paths()
    strategy = replication_strategy(solution, paths, EngineMode.CORRECT)
    report = ledger.self_financing_residual(strategy, 1e-10)
    engine = replicate(solution, paths, EngineMode.CORRECT)
    worst = float(max(np.max(report.max_abs), np.max(engine.ledger_residual_max)))
    ok = bool(np.all(report.is_self_financing)) and worst <= 1e-10
    return CriterionResult(
        4,
        "Ledger exactness",
        ok,
        f"{paths.shape[0]} paths x {paths.shape[1] - 1} steps, max residual={worst:.1e} (<=1e-10)",
    )


def subportfolio_contradiction() -> CriterionResult:
    solution, paths = _desk_paths()
    strategy, cash = cash_recast(solution, paths)
    full = ledger.self_financing_residual(strategy, 1e-10)
    sub = ledger.bk_subportfolio_check(strategy, cash, 1e-10)
    rebalanced = np.any(np.diff(strategy.positions[..., 0], axis=-1) != 0, axis=-1)
    n_reb = int(np.sum(rebalanced))
    flagged = int(np.sum(sub.max_abs[rebalanced] > 0))
    full_ok = bool(np.all(full.is_self_financing))
    ok = full_ok and n_reb > 0 and flagged == n_reb
    return CriterionResult(
        5,
        "Subportfolio contradiction",
        ok,
        f"full residual max={np.max(full.max_abs):.1e}; subportfolio nonzero on "
        f"{flagged}/{n_reb} rebalanced paths (min max_abs={np.min(sub.max_abs[rebalanced]):.3e})",
    )


def leibniz_gap_identity() -> CriterionResult:
    solution, paths = _desk_paths()
    star = replicate(solution, paths, EngineMode.ERRONEOUS_STAR)
    delta = star.hedge_ratios
    gap = np.sum(paths[:, 1:] * np.diff(delta, axis=1), axis=1)
    worst = float(np.max(np.abs(star.leakage_total - gap)))

    stds = {}
    for n in (125, 250):
        spec = PathSpec(10_000, n, SEED, DESK_MARKET)
        rep = replicate(solution, simulate_gbm_paths(spec), EngineMode.ERRONEOUS_CONSTANT_DELTA)
        stds[n] = rep.stats["std"]
    ratio = stds[125] / stds[250]
    ok = worst <= 1e-10 and 0.9 <= ratio <= 1.2
    return CriterionResult(
        6,
        "Leibniz-gap identity",
        ok,
        f"max |leakage - sum S(dDelta)|={worst:.1e} (<=1e-10); constant-delta "
        f"std(125)/std(250)={ratio:.4f} (in [0.9, 1.2])",
    )


def _convergence(drift: float | None, solution) -> tuple[bool, str, float]:
    reports = []
    ok = True
    parts = []
    for n in (50, 100, 200):
        spec = PathSpec(10_000, n, SEED, BS_MARKET, drift)
        rep = replicate(solution, simulate_gbm_paths(spec), EngineMode.CORRECT)
        reports.append(rep)
        st = rep.stats
        z = st["mean"] / st["stderr"]
        ok &= abs(z) < 3.0
        parts.append(f"n={n}: mean={st['mean']:+.5f} se={st['stderr']:.5f} z={z:+.2f}")
    rows = pnl_stats(reports)
    ratio = rows[0].std / rows[-1].std
    return ok, "; ".join(parts), ratio


def replication_convergence() -> CriterionResult:
    start = time.perf_counter()
    solution = solve_funding_pde(BS_MARKET, POLICIES[0], CALL)
    mean_ok, text, ratio = _convergence(None, solution)
    fast = time.perf_counter() - start < 60.0
    ok = mean_ok and 1.7 <= ratio <= 2.3 and fast
    return CriterionResult(
        7,
        "Replication convergence",
        ok,
        f"{text}; std(50)/std(200)={ratio:.4f} (in [1.7, 2.3]); runtime<60s={fast}",
    )


def drift_independence() -> CriterionResult:
    solution = solve_funding_pde(BS_MARKET, POLICIES[0], CALL)
    ok = True
    parts = []
    for mu in (-0.1, 0.0, 0.2):
        good, text, _ = _convergence(mu, solution)
        ok &= good
        parts.append(f"mu={mu:+.1f} {'ok' if good else 'FAIL'} ({text})")
    return CriterionResult(8, "Drift independence", ok, " | ".join(parts))


def grid_convergence() -> CriterionResult:
    ref = _bs_reference()
    errors = [
        abs(solve_funding_pde(BS_MARKET, POLICIES[0], CALL, GridSpec(n, n)).price - ref)
        for n in (400, 800)
    ]
    factor = errors[0] / errors[1]
    return CriterionResult(
        9,
        "Grid convergence",
        3.0 <= factor <= 5.0,
        f"err(400)={errors[0]:.3e} err(800)={errors[1]:.3e} factor={factor:.3f} (in [3, 5])",
    )


CRITERIA: tuple[Callable[[], CriterionResult], ...] = (
    black_scholes_collapse,
    oracle_equivalence,
    collateral_invariance,
    ledger_exactness,
    subportfolio_contradiction,
    leibniz_gap_identity,
    replication_convergence,
    drift_independence,
    grid_convergence,
)


def run_all(out: TextIO | None = None) -> list[CriterionResult]:
    results = []
    for check in CRITERIA:
        result = check()
        results.append(result)
        if out is not None:
            print(result.line(), file=out, flush=True)
    return results
