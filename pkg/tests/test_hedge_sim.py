import math

import numpy as np
import pytest

from selffin import (
    CollateralPolicy,
    EngineMode,
    MarketParams,
    PathSpec,
    Payoff,
    bk_subportfolio_check,
    leibniz_gap,
    pnl_stats,
    portfolio_value,
    replicate,
    self_financing_residual,
    simulate_gbm_paths,
    solve_funding_pde,
)
from selffin import hedge_sim
from selffin.errors import DomainError
from selffin.hedge_sim import cash_recast, replication_strategy, run_hedge, summary_stats
from selffin.ledger import StrategyPath

CALL = Payoff("call", 100.0)


@pytest.fixture(scope="module")
def flat_market():
    return MarketParams(sigma=0.0, r_d=0, r_r=0, r_c=0, r_f=0, spot=90.0, horizon=1.0)


@pytest.fixture(scope="module")
def flat_solution(flat_market):
    return solve_funding_pde(flat_market, CollateralPolicy(), CALL)


@pytest.fixture(scope="module")
def desk_paths(desk_market):
    return simulate_gbm_paths(PathSpec(200, 100, 99, desk_market))


class TestSimulation:
    def test_zero_vol_is_deterministic(self, flat_market):
        paths = simulate_gbm_paths(PathSpec(3, 8, 1, flat_market, drift=0.2))
        expected = 90.0 * np.exp(0.2 * np.linspace(0, 1, 9))
        np.testing.assert_allclose(paths, np.tile(expected, (3, 1)), rtol=1e-14)

    def test_same_seed_same_bits(self, desk_market):
        spec = PathSpec(50, 30, 12345, desk_market)
        assert simulate_gbm_paths(spec).tobytes() == simulate_gbm_paths(spec).tobytes()

    def test_seed_changes_paths(self, desk_market):
        a = simulate_gbm_paths(PathSpec(5, 10, 1, desk_market))
        b = simulate_gbm_paths(PathSpec(5, 10, 2, desk_market))
        assert not np.array_equal(a, b)

    def test_variates_depend_only_on_path_index(self, desk_market):
        spec = PathSpec(20, 16, 7, desk_market)
        full = simulate_gbm_paths(spec)
        subset = simulate_gbm_paths(spec, paths=[17, 3, 9])
        np.testing.assert_array_equal(subset, full[[17, 3, 9]])

    def test_lognormal_mean(self, desk_market):
        spec = PathSpec(100_000, 2, 2024, desk_market, drift=0.07)
        ratio = simulate_gbm_paths(spec)[:, -1] / desk_market.spot
        se = ratio.std(ddof=1) / math.sqrt(ratio.size)
        assert abs(ratio.mean() - math.exp(0.07)) < 3 * se

    @pytest.mark.parametrize(
        "kwargs", [{"n_paths": 0}, {"n_steps": 0}, {"seed": -1}, {"seed": 2**64}]
    )
    def test_spec_validation(self, desk_market, kwargs):
        base = {"n_paths": 1, "n_steps": 1, "seed": 0, "params": desk_market}
        with pytest.raises(DomainError):
            PathSpec(**{**base, **kwargs})


class TestCorrectMode:
    def test_deterministic_replication(self, flat_market, flat_solution):
        path = simulate_gbm_paths(PathSpec(1, 250, 0, flat_market, drift=0.2))
        report = replicate(flat_solution, path, EngineMode.CORRECT)
        largest_move = np.max(np.diff(path))
        assert abs(report.pnl[0]) <= largest_move
        assert report.ledger_residual_max[0] <= 1e-10

    def test_ledger_exact(self, desk_solution, desk_paths):
        report = replicate(desk_solution, desk_paths, "correct")
        assert np.all(report.ledger_residual_max <= 1e-10)
        strategy = replication_strategy(desk_solution, desk_paths)
        assert np.all(self_financing_residual(strategy, 1e-10).is_self_financing)
        assert np.all(report.leakage_total == 0)

    def test_funding_account_is_value_minus_collateral(self, desk_solution, desk_paths):
        strategy = replication_strategy(desk_solution, desk_paths[:3])
        repo, collateral, funding = strategy.assets
        np.testing.assert_array_equal(repo.price, 0)
        value = portfolio_value(strategy)
        np.testing.assert_allclose(funding.price, value - collateral.price, atol=1e-12)
        model = desk_solution.price_at(0.0, desk_paths[:3, 0])
        np.testing.assert_allclose(collateral.price[:, 0], 0.5 * model, rtol=1e-14)

    def test_unbiased_under_pricing_measure(self, bs_market, bs_solution):
        spec = PathSpec(10_000, 250, 31337, bs_market)
        report = replicate(bs_solution, simulate_gbm_paths(spec), EngineMode.CORRECT)
        st = report.stats
        assert abs(st["mean"]) < 3 * st["stderr"]
        assert np.max(report.ledger_residual_max) <= 1e-10

    def test_cash_recast_contradiction(self, desk_solution, desk_paths):
        strategy, cash = cash_recast(desk_solution, desk_paths)
        assert [a.name for a in strategy.assets] == ["stock", "collateral", "funding", "cash"]
        assert np.all(self_financing_residual(strategy, 1e-10).is_self_financing)
        sub = bk_subportfolio_check(strategy, cash, 1e-10)
        assert np.all(sub.max_abs > 0)
        np.testing.assert_allclose(
            portfolio_value(strategy), portfolio_value(replication_strategy(desk_solution, desk_paths)),
            atol=1e-10,
        )


class TestErroneousModes:
    def test_star_leakage_is_rebalancing_cost(self, desk_solution, desk_paths):
        report = replicate(desk_solution, desk_paths, EngineMode.ERRONEOUS_STAR)
        delta = report.hedge_ratios
        gap = np.sum(desk_paths[:, 1:] * np.diff(delta, axis=1), axis=1)
        np.testing.assert_allclose(report.leakage_total, gap, rtol=0, atol=1e-10)
        assert np.mean(report.leakage_total != 0) > 0.99

    def test_star_leakage_is_marked_minus_booked(self, desk_solution, desk_paths):
        report = replicate(desk_solution, desk_paths, EngineMode.ERRONEOUS_STAR)
        strategy = replication_strategy(desk_solution, desk_paths, EngineMode.ERRONEOUS_STAR)
        booked = desk_solution.price_at(1.0, desk_paths[:, -1])
        marked = portfolio_value(strategy)[:, -1]
        np.testing.assert_allclose(report.leakage_total, marked - booked, atol=1e-10)
        stock_only = StrategyPath(strategy.positions[..., :1], strategy.assets[:1])
        np.testing.assert_allclose(
            report.leakage_total, leibniz_gap(stock_only).sum(axis=-1), rtol=0, atol=1e-10
        )
        assert np.all(report.ledger_residual_max > 1e-10)

    def test_constant_delta_by_hand(self, flat_market, flat_solution):
        path = simulate_gbm_paths(PathSpec(1, 250, 0, flat_market, drift=0.2))
        report = replicate(flat_solution, path, EngineMode.ERRONEOUS_CONSTANT_DELTA)
        # out of the money at the start: value 0, delta 0, so nothing is ever hedged
        assert report.hedge_ratios[0, 0] == 0
        terminal = 90.0 * math.exp(0.2)
        assert report.pnl[0] == pytest.approx(-(1.0 - 0.0) * (terminal - 100.0), abs=1e-9)

    def test_constant_delta_frozen(self, desk_solution, desk_paths):
        report = replicate(desk_solution, desk_paths, EngineMode.ERRONEOUS_CONSTANT_DELTA)
        assert np.all(report.hedge_ratios == report.hedge_ratios[:, :1])
        assert np.all(report.ledger_residual_max <= 1e-10)


class TestEngine:
    def test_threads_do_not_change_results(self, desk_solution, desk_paths, monkeypatch):
        serial = replicate(desk_solution, desk_paths, "correct", threads=1)
        monkeypatch.setattr(hedge_sim, "CHUNK_PATHS", 16)
        parallel = replicate(desk_solution, desk_paths, "correct", threads=4)
        for name in ("pnl", "ledger_residual_max", "leakage_total"):
            np.testing.assert_array_equal(getattr(serial, name), getattr(parallel, name))
        assert serial.stats == parallel.stats

    def test_grid_exit_names_path(self, desk_solution, desk_paths, monkeypatch):
        paths = desk_paths[:8].copy()
        paths[5, 40] = 10 * desk_solution.s_max
        monkeypatch.setattr(hedge_sim, "CHUNK_PATHS", 2)
        with pytest.raises(DomainError, match="path 5 "):
            replicate(desk_solution, paths)

    def test_run_hedge_common_paths(self, desk_solution, desk_market):
        spec = PathSpec(40, 20, 5, desk_market)
        reports = run_hedge(desk_solution, spec, ["correct", "erroneous_star"])
        assert set(reports) == {EngineMode.CORRECT, EngineMode.ERRONEOUS_STAR}
        np.testing.assert_array_equal(
            reports[EngineMode.CORRECT].hedge_ratios, reports[EngineMode.ERRONEOUS_STAR].hedge_ratios
        )

    def test_paths_csv(self, desk_solution, desk_paths, tmp_path):
        report = replicate(desk_solution, desk_paths[:3])
        report.write_paths_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "path,pnl,ledger_residual_max,leakage_total"
        assert len(lines) == 4 and lines[3].startswith("2,")


class TestPnlStats:
    def test_single_report(self, desk_solution, desk_paths):
        rows = pnl_stats([replicate(desk_solution, desk_paths)])
        assert len(rows) == 1 and rows[0].std_ratio is None and rows[0].n_steps == 100

    def test_zero_vol_has_zero_std(self, flat_market, flat_solution):
        reports = [
            replicate(flat_solution, simulate_gbm_paths(PathSpec(4, n, 0, flat_market)))
            for n in (10, 20)
        ]
        assert all(row.std == 0 for row in pnl_stats(reports))

    def test_doubling_scales_like_sqrt2(self, bs_market, bs_solution):
        reports = [
            replicate(bs_solution, simulate_gbm_paths(PathSpec(4000, n, 8, bs_market)))
            for n in (50, 100)
        ]
        rows = pnl_stats(reports)
        assert rows[0].std_ratio == pytest.approx(math.sqrt(2), rel=0.15)

    def test_empty(self):
        with pytest.raises(DomainError):
            pnl_stats([])

    def test_summary_single_path(self):
        assert summary_stats(np.array([2.5])) == {"mean": 2.5, "std": 0.0, "stderr": 0.0}
