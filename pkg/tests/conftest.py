import numpy as np
import pytest

from vulnpricer import DefaultModel, MarketParams, MarketState, OptionSpec

import oracles


def make_setup(
    spot=80.0,
    strike=100.0,
    maturity=0.1,
    time=0.0,
    f=0.02,
    h=0.03,
    r_cds=0.05,
    sigma=0.3,
    beta=1.0,
    delta_div=0.0,
    defaulted=False,
):
    """(params, spec, state) with the canonical short-dated OTM defaults."""
    params = MarketParams(f=f, h=h, r_cds=r_cds, sigma=sigma, beta=beta, delta_div=delta_div)
    spec = OptionSpec(strike=strike, maturity=maturity)
    state = MarketState(spot=spot, time=time, defaulted=defaulted)
    return params, spec, state


@pytest.fixture
def ex51():
    """Canonical configuration: S=80, K=100, T=0.1, sigma=0.3, beta=1."""
    params, spec, state = make_setup()
    return params, spec, state, DefaultModel(intensity=0.05)


@pytest.fixture
def atm():
    """At-the-money one-year setup, same rates as ex51 but sigma=0.2."""
    params, spec, state = make_setup(spot=100.0, strike=100.0, maturity=1.0, sigma=0.2)
    return params, spec, state, DefaultModel(intensity=0.05)


@pytest.fixture(scope="session")
def goldens():
    return oracles.load_goldens()


def random_market(rng, beta=None, lo_money=0.7, hi_money=1.5):
    """A random but well-posed (params, spec, state) for sweep-style tests."""
    strike = 100.0
    params = MarketParams(
        f=rng.uniform(0.0, 0.1),
        h=rng.uniform(0.0, 0.1),
        r_cds=rng.uniform(0.0, 0.1),
        sigma=rng.uniform(0.15, 0.6),
        beta=float(rng.choice([0.0, 0.5, 1.0])) if beta is None else beta,
        delta_div=rng.uniform(0.0, 0.05),
    )
    spec = OptionSpec(strike=strike, maturity=rng.uniform(0.05, 2.0))
    state = MarketState(spot=strike * rng.uniform(lo_money, hi_money))
    return params, spec, state


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
