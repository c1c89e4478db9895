import pytest

from selffin import CollateralPolicy, MarketParams, Payoff, solve_funding_pde

# Values of the lognormal call integral evaluated by 30-digit mpmath quadrature,
# independent of the closed form under test.
BS_CALL_R5 = 10.450583572185567  # S=K=100, sigma=0.2, carry=discount=0.05, T=1
BS_CALL_R0 = 7.965567455405796  # S=K=100, sigma=0.2, carry=discount=0, T=1
BS_DELTA_R5 = 0.6368306511756191  # finite difference of the quadrature above


@pytest.fixture(scope="session")
def bs_market():
    return MarketParams(sigma=0.2, r_d=0.0, r_r=0.05, r_c=0.05, r_f=0.05, spot=100.0, horizon=1.0)


@pytest.fixture(scope="session")
def desk_market():
    return MarketParams(sigma=0.25, r_d=0.03, r_r=0.02, r_c=0.01, r_f=0.04, spot=100.0, horizon=1.0)


@pytest.fixture(scope="session")
def bs_solution(bs_market):
    return solve_funding_pde(bs_market, CollateralPolicy("none"), Payoff("call", 100.0))


@pytest.fixture(scope="session")
def desk_solution(desk_market):
    return solve_funding_pde(desk_market, CollateralPolicy("fraction", 0.5), Payoff("call", 100.0))
