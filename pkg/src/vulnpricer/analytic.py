"""Closed-form prices: vulnerable call, defaultable bond, fair CDS spread.

Pre-default value of the vulnerable European call (zero recovery at the
counterparty default time tau, constant rates):

    V(t, S) = S e^{-q (T-t)} N(d1) - K e^{-r_c (T-t)} N(d2)
    d1 = [ln(S/K) + (r_c - q + sigma^2/2)(T-t)] / (sigma sqrt(T-t))
    d2 = d1 - sigma sqrt(T-t)

with r_c = f + r_cds and q = r_c - f_beta + delta_div, i.e. a dividend
Black-Scholes call discounted at the defaultable-bond yield with carry
spread q.  The quoted price carries the survival indicator: 0 after default.

An equivalent route discounts the adjusted cash flow under the measure in
which the stock drifts at the repo rate h:

    V(t, S) = S e^{-(lam + f - h)(T-t)} N(d1') - K e^{-(lam + f)(T-t)} N(d2')

with d1', d2' built from rate h (and the dividend yield when present) and
lam the default intensity.  For beta = 1 and lam = r_cds the two routes
coincide; the equality is asserted in tests rather than exposed twice.

The zero-recovery bond is B(t) = 1_{tau>t} e^{-(r_cds + f)(T-t)}, and the
fair CDS spread solving the par condition is

    kappa(t, T) = -int_(t,T] e^{-f u} dG(u) / int_(t,T] e^{-f u} G(u) du

with G the survival function.  For exponential survival kappa = lambda for
every treasury rate f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from .core import (
    DefaultModel,
    MarketParams,
    MarketState,
    OptionSpec,
    PriceResult,
    Route,
    effective_rates,
)

__all__ = [
    "BsInputs",
    "norm_cdf",
    "bs_call_div",
    "vulnerable_call_price",
    "vulnerable_call_price_acf",
    "bond_price",
    "analytic_delta",
    "ExponentialSurvival",
    "PiecewiseConstantIntensity",
    "TabulatedSurvival",
    "cds_fair_spread",
]

_SQRT2 = math.sqrt(2.0)
# Below this total volatility the lognormal degenerates; price the forward.
_VOL_FLOOR = 1e-12


def norm_cdf(x):
    """Standard normal CDF via the complementary error function.

    N(x) = erfc(-x / sqrt(2)) / 2; absolute accuracy ~1e-16, vectorized.
    """
    return 0.5 * erfc(np.negative(x) / _SQRT2)


@dataclass(frozen=True)
class BsInputs:
    """Inputs of the dividend-yield Black-Scholes call.

    tau_mat is time to maturity in years (> 0); rate and div_yield are
    continuously compounded.
    """

    s: float
    k: float
    tau_mat: float
    rate: float
    div_yield: float
    sigma: float


def _d12(s, k, tau, rate, div_yield, sigma):
    vol = sigma * np.sqrt(tau)
    d1 = (np.log(s / k) + (rate - div_yield + 0.5 * sigma * sigma) * tau) / vol
    return d1, d1 - vol


def _call_kernel(s, k, tau, rate, div_yield, sigma):
    """Vectorized dividend BS call. Handles k = 0 and vanishing volatility.

    For sigma*sqrt(tau) < 1e-12 the distribution is degenerate and the value
    is the discounted forward intrinsic e^{-r tau} max(F - K, 0) with
    F = s e^{(r - q) tau}.
    """
    s = np.asarray(s, dtype=float)
    tau = np.asarray(tau, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    disc_s = np.exp(-div_yield * tau)
    if np.all(np.asarray(k) <= 0.0):
        return s * disc_s

    vol = sigma * np.sqrt(tau)
    degenerate = vol < _VOL_FLOOR
    forward = s * np.exp((rate - div_yield) * tau)
    intrinsic = np.exp(-rate * tau) * np.maximum(forward - k, 0.0)
    if np.all(degenerate):
        return intrinsic

    safe_vol = np.where(degenerate, 1.0, vol)
    d1 = (np.log(s / k) + (rate - div_yield + 0.5 * sigma * sigma) * tau) / safe_vol
    d2 = d1 - vol
    live = s * disc_s * norm_cdf(d1) - k * np.exp(-rate * tau) * norm_cdf(d2)
    return np.where(degenerate, intrinsic, live)


def bs_call_div(inputs: BsInputs) -> float:
    """Dividend-yield Black-Scholes call price.

    Degenerate volatility (sigma*sqrt(tau) < 1e-12) returns the discounted
    forward intrinsic value; k = 0 returns s e^{-q tau}.  k = 0 with s = 0
    is a domain error.
    """
    if inputs.k == 0.0 and inputs.s == 0.0:
        raise ValueError("k = 0 with s = 0 is outside the pricing domain")
    if inputs.s < 0.0 or inputs.k < 0.0:
        raise ValueError("s and k must be nonnegative")
    if inputs.tau_mat <= 0.0:
        raise ValueError("tau_mat must be > 0")
    return float(
        _call_kernel(
            inputs.s, inputs.k, inputs.tau_mat, inputs.rate, inputs.div_yield, inputs.sigma
        )
    )


def vulnerable_call_price(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
) -> PriceResult:
    """Replication price of the vulnerable call; 0 after default.

    Pre-default this is bs_call_div at rate r_c and dividend-carry q; the
    survival indicator multiplies the whole expression, so a defaulted state
    prices to exactly 0.
    """
    if state.defaulted:
        return PriceResult(0.0, Route.CLOSED_FORM)
    tau = spec.maturity - state.time
    if tau <= 0.0:
        raise ValueError("state.time must be strictly before maturity")
    rates = effective_rates(params)
    value = float(
        _call_kernel(state.spot, spec.strike, tau, rates.r_c, rates.q, params.sigma)
    )
    return PriceResult(value, Route.CLOSED_FORM)


def vulnerable_call_price_acf(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    default_model: DefaultModel | None = None,
) -> PriceResult:
    """Adjusted-cash-flow price: survival-weighted payoff, stock drift h.

    V = S e^{-(lam+f-h)tau} N(d1) - K e^{-(lam+f)tau} N(d2) with d1, d2 built
    from rate h (dividend yield enters the same way as in the plain call).
    beta is ignored: this route fixes the repo-financed drift measure, and
    coincides with the replication price exactly when beta = 1 and
    lam = r_cds.  The intensity defaults to r_cds.
    """
    if state.defaulted:
        return PriceResult(0.0, Route.CLOSED_FORM)
    tau = spec.maturity - state.time
    if tau <= 0.0:
        raise ValueError("state.time must be strictly before maturity")
    lam = params.r_cds if default_model is None else default_model.intensity
    prefactor = math.exp(-(lam + params.f - params.h) * tau)
    bs = _call_kernel(
        state.spot, spec.strike, tau, params.h, params.delta_div, params.sigma
    )
    return PriceResult(float(prefactor * bs), Route.CLOSED_FORM)


def bond_price(params: MarketParams, maturity: float, state: MarketState) -> float:
    """Zero-recovery defaultable zero-coupon bond: 1_{tau>t} e^{-(r_cds+f)(T-t)}."""
    tau = maturity - state.time
    if tau < 0.0:
        raise ValueError("state.time must not exceed the bond maturity")
    if state.defaulted:
        return 0.0
    return math.exp(-(params.r_cds + params.f) * tau)


def analytic_delta(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
) -> float:
    """Stock holding of the replication strategy: e^{-q tau} N(d1); 0 after default."""
    if state.defaulted:
        return 0.0
    tau = spec.maturity - state.time
    if tau <= 0.0:
        raise ValueError("state.time must be strictly before maturity")
    rates = effective_rates(params)
    if spec.strike == 0.0:
        return math.exp(-rates.q * tau)
    d1, _ = _d12(state.spot, spec.strike, tau, rates.r_c, rates.q, params.sigma)
    return float(math.exp(-rates.q * tau) * norm_cdf(d1))


# ---------------------------------------------------------------------------
# Survival curves and the fair CDS spread.


@dataclass(frozen=True)
class ExponentialSurvival:
    """G(u) = exp(-intensity * u), constant hazard."""

    intensity: float

    def survival(self, u: float) -> float:
        return math.exp(-self.intensity * u)

    def intensity_segments(self, t: float, T: float):
        return [(t, T, self.intensity)]


class PiecewiseConstantIntensity:
    """Hazard constant on [knots[i], knots[i+1]) and beyond the last knot.

    knots must start at 0 and increase; rates has one entry per knot.
    """

    def __init__(self, knots, rates):
        knots = [float(x) for x in knots]
        rates = [float(x) for x in rates]
        if len(knots) != len(rates) or not knots or knots[0] != 0.0:
            raise ValueError("knots must start at 0 and pair one rate per knot")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        if any(r < 0.0 for r in rates):
            raise ValueError("intensities must be >= 0")
        self.knots = knots
        self.rates = rates

    def survival(self, u: float) -> float:
        acc = 0.0
        for i, a in enumerate(self.knots):
            b = self.knots[i + 1] if i + 1 < len(self.knots) else math.inf
            if u <= a:
                break
            acc += self.rates[i] * (min(u, b) - a)
        return math.exp(-acc)

    def intensity_segments(self, t: float, T: float):
        """Clip the hazard segments to (t, T]."""
        segs = []
        for i, a in enumerate(self.knots):
            b = self.knots[i + 1] if i + 1 < len(self.knots) else math.inf
            lo, hi = max(a, t), min(b, T)
            if hi > lo:
                segs.append((lo, hi, self.rates[i]))
        return segs


class TabulatedSurvival(PiecewiseConstantIntensity):
    """Survival probabilities at knots, log-linear in between.

    Log-linear interpolation of G is exactly a piecewise-constant hazard, so
    the closed-form spread path applies.
    """

    def __init__(self, times, probs):
        times = [float(x) for x in times]
        probs = [float(x) for x in probs]
        if len(times) != len(probs) or len(times) < 2:
            raise ValueError("need at least two (time, probability) knots")
        if times[0] != 0.0 or probs[0] != 1.0:
            raise ValueError("curve must start at (0, 1)")
        if any(p <= 0.0 for p in probs):
            raise ValueError("survival probabilities must stay > 0")
        if any(p2 > p1 for p1, p2 in zip(probs, probs[1:])):
            raise ValueError("survival must be nonincreasing")
        rates = [
            math.log(p1 / p2) / (t2 - t1)
            for (t1, t2, p1, p2) in zip(times, times[1:], probs, probs[1:])
        ]
        # hazard beyond the last knot extends flat
        super().__init__(times[:-1], rates)


def _segment_integral(G_a: float, a: float, b: float, f: float, lam: float) -> float:
    """int_a^b e^{-f u} G(u) du for G(u) = G_a e^{-lam (u-a)} on the segment."""
    width = b - a
    total = f + lam
    if abs(total) * width < 1e-12:
        base = width * (1.0 - 0.5 * total * width)
    else:
        base = -math.expm1(-total * width) / total
    return G_a * math.exp(-f * a) * base


def cds_fair_spread(survival, f: float, t: float, T: float, method: str = "auto") -> float:
    """Fair running spread of a CDS protecting (t, T].

    kappa = -int_(t,T] e^{-f u} dG(u) / int_(t,T] e^{-f u} G(u) du.

    When ``survival`` exposes piecewise-constant hazard segments the integrals
    are evaluated in closed form (method='closed' forces this); otherwise the
    numerator is reduced by integration by parts to
    G(t) e^{-f t} - G(T) e^{-f T} - f * D with D the denominator integral,
    which is then computed by adaptive quadrature (method='quadrature').
    For exponential survival the result is the intensity, independent of f.

    Raises ValueError when the exposure window is degenerate (denominator
    below 1e-14) or the inputs are inconsistent.
    """
    if not T > t:
        raise ValueError("need T > t")
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")

    survival_fn = survival.survival if hasattr(survival, "survival") else survival
    G_t = survival_fn(t)
    G_T = survival_fn(T)
    if not G_t > 0.0:
        raise ValueError("survival at the window start must be > 0")
    if G_T > G_t + 1e-12:
        raise ValueError("survival function must be nonincreasing")

    has_segments = hasattr(survival, "intensity_segments")
    if method == "closed" and not has_segments:
        raise ValueError("closed-form path needs piecewise-constant intensity segments")

    if has_segments and method != "quadrature":
        num = 0.0
        den = 0.0
        G_a = G_t
        for a, b, lam in survival.intensity_segments(t, T):
            seg = _segment_integral(G_a, a, b, f, lam)
            num += lam * seg
            den += seg
            G_a *= math.exp(-lam * (b - a))
        if den < 1e-14:
            raise ValueError("no exposure window: premium-leg integral is degenerate")
        return num / den

    den, _ = quad(
        lambda u: math.exp(-f * u) * survival_fn(u), t, T, epsabs=1e-13, epsrel=1e-12, limit=300
    )
    if den < 1e-14:
        raise ValueError("no exposure window: premium-leg integral is degenerate")
    num = G_t * math.exp(-f * t) - G_T * math.exp(-f * T) - f * den
    return num / den
