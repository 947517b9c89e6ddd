import math

import numpy as np
import pytest

from vulnpricer import (
    BsInputs,
    DefaultModel,
    ExponentialSurvival,
    MarketParams,
    MarketState,
    OptionSpec,
    PiecewiseConstantIntensity,
    Route,
    TabulatedSurvival,
    analytic_delta,
    bond_price,
    bs_call_div,
    cds_fair_spread,
    effective_rates,
    norm_cdf,
    vulnerable_call_price,
    vulnerable_call_price_acf,
)

import oracles
from conftest import make_setup, random_market


def setup_from_golden(row):
    return make_setup(
        spot=row["S"],
        strike=row["K"],
        maturity=row["tau"],
        f=row["f"],
        h=row["h"],
        r_cds=row["r_cds"],
        sigma=row["sigma"],
        beta=row["beta"],
        delta_div=row["delta"],
    )


# ---------------------------------------------------------------------------
# closed form against the frozen quadrature oracle


def test_closed_form_matches_goldens(goldens):
    assert len(goldens) == 8
    for row in goldens:
        params, spec, state = setup_from_golden(row)
        got = vulnerable_call_price(params, spec, state)
        assert got.route is Route.CLOSED_FORM
        rel = abs(got.value - row["expected_price"]) / row["expected_price"]
        assert rel < 5e-13, f"row {row}: rel diff {rel:.3e}"


def test_live_quadrature_agrees_with_closed(rng):
    # fresh oracle evaluations at random points, not just the frozen ones
    for _ in range(25):
        params, spec, state = random_market(rng)
        want = oracles.vulnerable_call_quad(
            state.spot,
            spec.strike,
            spec.maturity,
            params.f,
            params.h,
            params.r_cds,
            params.beta,
            params.sigma,
            params.delta_div,
        )
        got = vulnerable_call_price(params, spec, state).value
        assert abs(got - want) <= 1e-12 * max(1.0, want)


def test_factorized_form_identity(rng):
    # V = exp(-(r_c - f_beta) tau) * BS(rate=f_beta, q=delta): same value,
    # different arrangement of the discounting
    for _ in range(50):
        params, spec, state = random_market(rng)
        f_beta, _, r_c = effective_rates(params)
        tau = spec.maturity - state.time
        bs = bs_call_div(
            BsInputs(
                s=state.spot,
                k=spec.strike,
                tau_mat=tau,
                rate=f_beta,
                div_yield=params.delta_div,
                sigma=params.sigma,
            )
        )
        want = math.exp(-(r_c - f_beta) * tau) * bs
        got = vulnerable_call_price(params, spec, state).value
        assert abs(got - want) <= 1e-14 * max(1.0, abs(want))


# ---------------------------------------------------------------------------
# the adjusted-cash-flow route


def test_acf_agrees_when_pure_repo(rng):
    # beta = 1 and intensity = r_cds is exactly the regime where the two
    # factorizations coincide
    for _ in range(200):
        params, spec, state = random_market(rng, beta=1.0)
        a = vulnerable_call_price(params, spec, state).value
        b = vulnerable_call_price_acf(params, spec, state).value
        assert abs(a - b) <= 1e-12 * max(1.0, a)


def test_acf_differs_off_regime(ex51):
    params, spec, state, model = ex51
    mixed = MarketParams(f=0.02, h=0.06, r_cds=0.05, sigma=0.3, beta=0.5)
    a = vulnerable_call_price(mixed, spec, state).value
    b = vulnerable_call_price_acf(mixed, spec, state, model).value
    assert abs(a - b) > 1e-6 * a  # funding mix shifts the replication price

    wrong_lam = DefaultModel(intensity=0.10)
    c = vulnerable_call_price_acf(params, spec, state, wrong_lam).value
    d = vulnerable_call_price_acf(params, spec, state, model).value
    assert abs(c - d) > 1e-6 * d
    # intensity defaults to r_cds when no model is passed
    assert vulnerable_call_price_acf(params, spec, state).value == d


def test_acf_intensity_scaling(ex51):
    # the survival weight factors out: V(lam) = e^{-(lam - lam0) tau} V(lam0)
    params, spec, state, model = ex51
    base = vulnerable_call_price_acf(params, spec, state, DefaultModel(0.05)).value
    bumped = vulnerable_call_price_acf(params, spec, state, DefaultModel(0.15)).value
    want = math.exp(-0.10 * spec.maturity) * base
    assert abs(bumped - want) <= 1e-15 * max(1.0, want)


# ---------------------------------------------------------------------------
# kernel edge cases


def test_bs_call_zero_strike():
    v = bs_call_div(BsInputs(s=50.0, k=0.0, tau_mat=2.0, rate=0.05, div_yield=0.03, sigma=0.4))
    assert v == 50.0 * math.exp(-0.03 * 2.0)


def test_bs_call_degenerate_vol_reduces_to_forward_intrinsic():
    itm = bs_call_div(BsInputs(s=120.0, k=100.0, tau_mat=1.0, rate=0.05, div_yield=0.0, sigma=1e-14))
    want = 120.0 - 100.0 * math.exp(-0.05)
    assert abs(itm - want) < 1e-12
    otm = bs_call_div(BsInputs(s=80.0, k=100.0, tau_mat=1.0, rate=0.05, div_yield=0.0, sigma=1e-14))
    assert otm == 0.0


def test_bs_call_domain_errors():
    with pytest.raises(ValueError):
        bs_call_div(BsInputs(s=0.0, k=0.0, tau_mat=1.0, rate=0.0, div_yield=0.0, sigma=0.2))
    with pytest.raises(ValueError):
        bs_call_div(BsInputs(s=-1.0, k=100.0, tau_mat=1.0, rate=0.0, div_yield=0.0, sigma=0.2))
    with pytest.raises(ValueError):
        bs_call_div(BsInputs(s=100.0, k=100.0, tau_mat=0.0, rate=0.0, div_yield=0.0, sigma=0.2))


def test_vulnerable_price_after_default_is_zero():
    params, spec, state = make_setup(defaulted=True)
    assert vulnerable_call_price(params, spec, state).value == 0.0
    assert vulnerable_call_price_acf(params, spec, state).value == 0.0
    assert analytic_delta(params, spec, state) == 0.0


def test_vulnerable_price_rejects_expired():
    params, spec, state = make_setup(time=0.1)  # == maturity
    with pytest.raises(ValueError, match="before maturity"):
        vulnerable_call_price(params, spec, state)


def test_price_monotone_in_spot(ex51):
    params, spec, _, _ = ex51
    spots = np.linspace(40.0, 200.0, 33)
    values = [vulnerable_call_price(params, spec, MarketState(s)).value for s in spots]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_deep_otm_stays_relative():
    # far out of the money the price underflows gracefully, never negative
    params, spec, state = make_setup(spot=10.0, strike=100.0, maturity=1.0, sigma=0.15)
    v = vulnerable_call_price(params, spec, state).value
    assert 0.0 <= v < 1e-30


# ---------------------------------------------------------------------------
# bond and delta


def test_bond_price_formula(rng):
    for _ in range(20):
        f, r_cds = rng.uniform(0.0, 0.1, size=2)
        params = MarketParams(f=f, h=0.0, r_cds=r_cds, sigma=0.2, beta=1.0)
        t = rng.uniform(0.0, 2.0)
        T = t + rng.uniform(0.01, 5.0)
        got = bond_price(params, T, MarketState(spot=1.0, time=t))
        assert got == math.exp(-(r_cds + f) * (T - t))


def test_bond_price_default_and_domain():
    params, _, _ = make_setup()
    assert bond_price(params, 1.0, MarketState(spot=1.0, time=0.2, defaulted=True)) == 0.0
    assert bond_price(params, 1.0, MarketState(spot=1.0, time=1.0)) == 1.0  # at maturity
    with pytest.raises(ValueError):
        bond_price(params, 1.0, MarketState(spot=1.0, time=1.5))


def test_analytic_delta_matches_fd(rng):
    for _ in range(25):
        params, spec, state = random_market(rng)
        ds = 1e-4 * state.spot
        fd = (
            vulnerable_call_price(params, spec, MarketState(state.spot + ds)).value
            - vulnerable_call_price(params, spec, MarketState(state.spot - ds)).value
        ) / (2.0 * ds)
        got = analytic_delta(params, spec, state)
        assert abs(got - fd) < 1e-6 * max(1.0, abs(fd))


def test_analytic_delta_zero_strike():
    params, spec, state = make_setup(strike=0.0)
    _, q, _ = effective_rates(params)
    assert analytic_delta(params, spec, state) == math.exp(-q * spec.maturity)


# ---------------------------------------------------------------------------
# normal CDF


def test_norm_cdf_reference_points():
    assert norm_cdf(0.0) == 0.5
    assert abs(norm_cdf(1.96) - 0.9750021048517795) < 1e-15
    assert abs(norm_cdf(-1.0) + norm_cdf(1.0) - 1.0) < 1e-15
    x = np.array([-2.0, 0.0, 2.0])
    out = norm_cdf(x)
    assert out.shape == x.shape and np.all(np.diff(out) > 0)


# ---------------------------------------------------------------------------
# survival curves and the fair CDS spread


def test_exponential_survival_flat_spread():
    # kappa == intensity for every treasury rate, both evaluation paths
    curve = ExponentialSurvival(0.05)
    for f in (0.0, 0.03, 0.10):
        for method in ("closed", "quadrature"):
            k = cds_fair_spread(curve, f, 0.0, 5.0, method=method)
            assert abs(k - 0.05) < 1e-10, (f, method, k)


def test_piecewise_spread_matches_goldens():
    # two-segment hazard 0.02 on [0,1), 0.08 on [1,inf); window (0, 2]
    curve = PiecewiseConstantIntensity([0.0, 1.0], [0.02, 0.08])
    closed = cds_fair_spread(curve, 0.0, 0.0, 2.0, method="closed")
    assert abs(closed - 0.049253903667516155) < 1e-14
    quadv = cds_fair_spread(curve, 0.0, 0.0, 2.0, method="quadrature")
    # midpoint Riemann oracle at n=400000 agreed to ~1.5e-15 absolute
    assert abs(quadv - 0.0492539036675154) < 1e-12
    assert abs(closed - quadv) < 1e-12


def test_piecewise_spread_live_riemann(rng):
    # du = 1e-4 divides both knot offsets, so no Riemann cell straddles a
    # hazard jump and the midpoint rule keeps its O(du^2) accuracy
    for _ in range(5):
        r1, r2, r3 = rng.uniform(0.01, 0.2, size=3)
        f = rng.uniform(0.0, 0.1)
        curve = PiecewiseConstantIntensity([0.0, 0.7, 1.9], [r1, r2, r3])
        want = oracles.kappa_riemann(f, [0.0, 0.7, 1.9], [r1, r2, r3], 0.3, 3.0, 27000)
        got = cds_fair_spread(curve, f, 0.3, 3.0)
        assert abs(got - want) < 1e-8


def test_piecewise_survival_values():
    curve = PiecewiseConstantIntensity([0.0, 1.0], [0.02, 0.08])
    assert curve.survival(0.0) == 1.0
    assert abs(curve.survival(1.0) - math.exp(-0.02)) < 1e-16
    assert abs(curve.survival(2.5) - math.exp(-0.02 - 0.08 * 1.5)) < 1e-16
    segs = curve.intensity_segments(0.5, 1.5)
    assert segs == [(0.5, 1.0, 0.02), (1.0, 1.5, 0.08)]


@pytest.mark.parametrize(
    "knots,rates",
    [
        ([0.5, 1.0], [0.1, 0.2]),  # does not start at 0
        ([0.0, 1.0], [0.1]),  # length mismatch
        ([0.0, 1.0, 1.0], [0.1, 0.2, 0.3]),  # not increasing
        ([0.0, 1.0], [0.1, -0.2]),  # negative hazard
    ],
)
def test_piecewise_rejects_bad_curves(knots, rates):
    with pytest.raises(ValueError):
        PiecewiseConstantIntensity(knots, rates)


def test_tabulated_survival_reproduces_knots():
    times = [0.0, 1.0, 3.0, 5.0]
    probs = [1.0, 0.97, 0.90, 0.82]
    curve = TabulatedSurvival(times, probs)
    for t, p in zip(times, probs):
        assert abs(curve.survival(t) - p) < 1e-15
    # log-linear between knots
    mid = curve.survival(2.0)
    assert abs(mid - math.sqrt(0.97 * 0.90)) < 1e-15
    # spread well-defined and inside the hazard range
    k = cds_fair_spread(curve, 0.02, 0.0, 5.0)
    assert 0.0 < k < 0.06


@pytest.mark.parametrize(
    "times,probs",
    [
        ([0.5, 1.0], [1.0, 0.9]),  # must start at t=0
        ([0.0, 1.0], [0.9, 0.8]),  # must start at probability 1
        ([0.0, 1.0], [1.0, 1.1]),  # increasing survival
        ([0.0, 1.0], [1.0, 0.0]),  # hits zero
        ([0.0], [1.0]),  # single knot
    ],
)
def test_tabulated_rejects_bad_curves(times, probs):
    with pytest.raises(ValueError):
        TabulatedSurvival(times, probs)


def test_spread_callable_survival_path():
    # a bare callable has no hazard segments, so it goes through quadrature
    lam = 0.04
    got = cds_fair_spread(lambda u: math.exp(-lam * u), 0.05, 0.0, 3.0)
    assert abs(got - lam) < 1e-10
    with pytest.raises(ValueError, match="closed-form path"):
        cds_fair_spread(lambda u: math.exp(-lam * u), 0.05, 0.0, 3.0, method="closed")


def test_spread_domain_errors():
    curve = ExponentialSurvival(0.05)
    with pytest.raises(ValueError, match="T > t"):
        cds_fair_spread(curve, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="unknown method"):
        cds_fair_spread(curve, 0.0, 0.0, 1.0, method="magic")
    with pytest.raises(ValueError, match="nonincreasing"):
        cds_fair_spread(lambda u: 1.0 + u, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError, match="must be > 0"):
        cds_fair_spread(lambda u: 0.0 if u > 0.5 else 1.0, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError, match="no exposure"):
        cds_fair_spread(lambda u: 1.0, 0.0, 0.0, 1e-15)


def test_spread_tiny_hazard_stable():
    # the closed per-segment integral switches to a series for small rates
    curve = PiecewiseConstantIntensity([0.0], [1e-13])
    closed = cds_fair_spread(curve, 0.0, 0.0, 1.0, method="closed")
    assert abs(closed - 1e-13) < 1e-25
    zero = cds_fair_spread(PiecewiseConstantIntensity([0.0], [0.0]), 0.03, 0.0, 1.0)
    assert zero == 0.0
