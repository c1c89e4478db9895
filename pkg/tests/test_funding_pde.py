import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import ndtr

from conftest import BS_CALL_R5, BS_DELTA_R5
from selffin import (
    CollateralPolicy,
    GridSpec,
    MarketParams,
    Payoff,
    binomial_oracle,
    black_scholes_closed_form,
    delta_surface,
    price_at,
    solve_funding_pde,
)
from selffin.errors import DomainError
from selffin.funding_pde import effective_rate, forward_payoff, sweep

NONE, HALF, FULL = CollateralPolicy("none"), CollateralPolicy("fraction", 0.5), CollateralPolicy("full")
CALL, PUT = Payoff("call", 100.0), Payoff("put", 100.0)


def test_black_scholes_collapse(bs_solution):
    assert bs_solution.price == pytest.approx(BS_CALL_R5, rel=1e-3)


def test_deterministic_payoff():
    market = MarketParams(sigma=0, r_d=0, r_r=0, r_c=0, r_f=0, spot=120, horizon=1)
    sol = solve_funding_pde(market, NONE, CALL)
    assert sol.price == pytest.approx(20.0, abs=1e-12)


def test_full_collateral_beats_unsecured_funding():
    market = MarketParams(sigma=0.2, r_d=0, r_r=0.02, r_c=0.01, r_f=0.04, spot=100, horizon=1)
    full = solve_funding_pde(market, FULL, CALL).price
    none = solve_funding_pde(market, NONE, CALL).price
    assert full > none
    assert full == pytest.approx(binomial_oracle(market, FULL, CALL, 2000), rel=1e-3)
    assert none == pytest.approx(binomial_oracle(market, NONE, CALL, 2000), rel=1e-3)


def test_effective_rate():
    market = MarketParams(sigma=0.2, r_d=0, r_r=0.02, r_c=0.01, r_f=0.04, spot=100, horizon=1)
    assert effective_rate(market, NONE) == 0.04
    assert effective_rate(market, FULL) == 0.01
    assert effective_rate(market, HALF) == pytest.approx(0.025)


@pytest.mark.parametrize("payoff", [CALL, PUT])
def test_collateral_invariance(desk_market, payoff):
    market = replace(desk_market, r_c=0.03, r_f=0.03)
    prices = [solve_funding_pde(market, p, payoff).price for p in (NONE, HALF, FULL)]
    assert max(prices) - min(prices) < 1e-8


@pytest.mark.parametrize("kind", ["call", "put"])
def test_full_collateral_is_black_scholes_at_collateral_rate(desk_market, kind):
    sol = solve_funding_pde(desk_market, FULL, Payoff(kind, 100.0))
    ref, _ = black_scholes_closed_form(100, 100, 0.25, desk_market.carry, desk_market.r_c, 1.0, kind)
    assert sol.price == pytest.approx(ref, rel=1e-3)


def test_linearity_call_minus_put_is_forward(desk_market):
    call = solve_funding_pde(desk_market, HALF, CALL)
    put = solve_funding_pde(desk_market, HALF, PUT)
    fwd = solve_funding_pde(desk_market, HALF, forward_payoff(100.0, call.s_max))
    np.testing.assert_array_equal(fwd.spots, call.spots)
    assert call.price - put.price == pytest.approx(fwd.price, rel=1e-6)
    np.testing.assert_allclose(call.values - put.values, fwd.values, atol=1e-9)


def test_price_nonincreasing_in_funding_rate(desk_market):
    prices = sweep(desk_market, NONE, CALL, "r_f", [0.01, 0.04, 0.07])
    assert prices[0] >= prices[1] >= prices[2]


def test_terminal_slice_is_payoff(desk_solution):
    np.testing.assert_array_equal(desk_solution.values[-1], CALL(desk_solution.spots))


def test_spot_is_grid_node(desk_solution):
    assert 100.0 in desk_solution.spots
    assert desk_solution.s_max >= 5 * 100.0


class TestDelta:
    def test_surface_matches_stored(self, desk_solution):
        np.testing.assert_array_equal(delta_surface(desk_solution), desk_solution.deltas)

    def test_central_differences(self, desk_solution):
        v, s = desk_solution.values, desk_solution.spots
        np.testing.assert_allclose(
            desk_solution.deltas[:, 1:-1], (v[:, 2:] - v[:, :-2]) / (s[2:] - s[:-2]), rtol=1e-12
        )
        np.testing.assert_allclose(
            desk_solution.deltas[:, 0], (v[:, 1] - v[:, 0]) / (s[1] - s[0]), rtol=1e-12
        )

    def test_deep_itm_and_otm(self, bs_solution):
        t = 0.99
        assert bs_solution.delta_at(t, 300.0) == pytest.approx(1.0, abs=1e-2)
        assert bs_solution.delta_at(t, 30.0) == pytest.approx(0.0, abs=1e-2)

    def test_at_spot_matches_nd1(self, bs_solution):
        d1 = (0.05 + 0.02) / 0.2
        assert ndtr(d1) == pytest.approx(BS_DELTA_R5, rel=1e-12)
        assert bs_solution.delta_at_spot == pytest.approx(BS_DELTA_R5, abs=5e-3)

    def test_call_delta_bounded(self, bs_solution):
        # edge nodes use one-sided differences across the kink-free far field
        assert bs_solution.deltas.min() > -1e-2
        assert bs_solution.deltas.max() < 1 + 1e-2


class TestPriceAt:
    def test_node(self, desk_solution):
        j, i = 37, 121
        t, s = desk_solution.times[j], desk_solution.spots[i]
        assert price_at(desk_solution, t, s) == desk_solution.values[j, i]

    def test_midpoint_on_terminal_slice(self, desk_solution):
        s = desk_solution.spots
        i = np.searchsorted(s, 130.0)
        mid = 0.5 * (s[i] + s[i + 1])
        expected = 0.5 * (CALL(s[i]) + CALL(s[i + 1]))
        assert desk_solution.price_at(1.0, mid) == pytest.approx(expected, rel=1e-14)

    def test_headline_price(self, desk_solution):
        assert price_at(desk_solution, 0.0, 100.0) == desk_solution.price

    @pytest.mark.parametrize("t,s", [(-0.1, 100), (1.1, 100), (0.5, -1), (0.5, 1e6)])
    def test_out_of_domain(self, desk_solution, t, s):
        with pytest.raises(DomainError):
            desk_solution.price_at(t, s)


def test_implicit_scheme_converges(bs_market):
    sol = solve_funding_pde(bs_market, NONE, CALL, GridSpec(400, 400, scheme_theta=1.0))
    assert sol.price == pytest.approx(BS_CALL_R5, rel=2e-3)


def test_explicit_scheme_warns(bs_market):
    with pytest.warns(RuntimeWarning, match="stability"):
        solve_funding_pde(bs_market, NONE, CALL, GridSpec(200, 10, scheme_theta=0.0))


def test_stable_explicit_scheme_is_quiet(bs_market):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sol = solve_funding_pde(bs_market, NONE, CALL, GridSpec(120, 2000, scheme_theta=0.0))
    assert sol.price == pytest.approx(BS_CALL_R5, rel=5e-3)


def test_custom_payoff_table():
    payoff = Payoff("custom", custom_values=((50, 0), (100, 10), (150, 10)))
    np.testing.assert_allclose(payoff([0, 75, 125, 200]), [-10, 5, 10, 10])


def test_grid_too_coarse(bs_market):
    with pytest.raises(DomainError, match="bracket"):
        solve_funding_pde(bs_market, NONE, CALL, GridSpec(s_nodes=3, t_steps=10))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"s_nodes": 2},
        {"t_steps": 0},
        {"s_max_multiple": 2.0},
        {"scheme_theta": 1.5},
        {"rannacher_steps": -1},
    ],
)
def test_grid_spec_validation(kwargs):
    with pytest.raises(DomainError):
        GridSpec(**kwargs)


@pytest.mark.parametrize(
    "field,value", [("sigma", -0.1), ("spot", 0.0), ("horizon", 0.0), ("r_f", float("nan"))]
)
def test_market_validation(bs_market, field, value):
    with pytest.raises(DomainError):
        replace(bs_market, **{field: value})


def test_policy_validation():
    with pytest.raises(DomainError):
        CollateralPolicy("fraction")
    with pytest.raises(DomainError):
        CollateralPolicy("fraction", 1.5)
    with pytest.raises(DomainError):
        CollateralPolicy("partial")


def test_payoff_validation():
    with pytest.raises(DomainError):
        Payoff("call")
    with pytest.raises(DomainError):
        Payoff("custom", custom_values=((1, 2),))
    with pytest.raises(DomainError):
        Payoff("custom", custom_values=((2, 0), (1, 0)))
