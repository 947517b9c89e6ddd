"""Funding and credit sensitivities of the vulnerable call.

All first-order derivatives of the survival-conditional closed form

    V = S e^{-q tau} N(d1) - K e^{-r_c tau} N(d2),
    q = r_c - f_beta + delta_div,   r_c = f + r_cds,
    f_beta = (1 - beta) f + beta h,

have closed expressions because a bump to any flat rate shifts (r_c, q)
jointly and N'(d1) S e^{-q tau} = N'(d2) K e^{-r_c tau} cancels the d-terms:

    dV/df      = tau [K e^{-r_c tau} N(d2) - beta S e^{-q tau} N(d1)]
    dV/dh      = beta tau S e^{-q tau} N(d1)            (>= 0 always)
    dV/dr_cds  = -tau V                                 (pure discounting)
    dV/dS      = e^{-q tau} N(d1)

With full repo financing (beta = 1) the treasury rate enters only through
the credit discount, so dV/df = -tau V exactly and the relative repo
sensitivity strictly exceeds tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import norm_cdf, vulnerable_call_price
from .core import MarketParams, MarketState, OptionSpec, effective_rates, with_updates

__all__ = [
    "GreekSet",
    "InvalidAxis",
    "SweepResult",
    "analytic_greeks",
    "fd_greeks",
    "sweep_surface",
    "relative_sensitivity_check",
]

_SWEEP_AXES = ("f", "h", "r_cds", "sigma", "beta", "spot")


class InvalidAxis(ValueError):
    """Sweep axis name outside the supported parameter set."""


@dataclass(frozen=True)
class GreekSet:
    """Price and rate sensitivities at a point.

    relative_d_f / relative_d_h are the derivatives divided by the price
    (NaN when the price is zero); on a defaulted state everything is 0.
    """

    value: float
    d_f: float
    d_h: float
    d_rcds: float
    delta: float
    relative_d_f: float
    relative_d_h: float


def _greek_terms(s, k, tau, r_c, q, sigma):
    """Return (S e^{-q tau} N(d1), K e^{-r_c tau} N(d2)) elementwise.

    Degenerate strikes / volatilities collapse to the forward-intrinsic
    limit, mirroring the price kernel.
    """
    s = np.asarray(s, dtype=float)
    k = np.asarray(k, dtype=float)
    r_c = np.asarray(r_c, dtype=float)
    q = np.asarray(q, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s, k, r_c, q, sigma = np.broadcast_arrays(s, k, r_c, q, sigma)

    disc_s = s * np.exp(-q * tau)
    disc_k = k * np.exp(-r_c * tau)
    vol = sigma * math.sqrt(tau)
    degenerate = (k <= 0.0) | (vol < 1e-12)
    safe_k = np.where(k <= 0.0, 1.0, k)
    safe_vol = np.where(vol < 1e-12, 1.0, vol)
    d1 = (np.log(s / safe_k) + (r_c - q) * tau) / safe_vol + 0.5 * safe_vol
    d2 = d1 - safe_vol
    term_s = disc_s * norm_cdf(d1)
    term_k = disc_k * norm_cdf(d2)
    # degenerate: exercise iff forward > strike (k <= 0 always exercises)
    exercise = (disc_s * np.exp(r_c * tau) > np.maximum(k, 0.0)) | (k <= 0.0)
    term_s = np.where(degenerate, np.where(exercise, disc_s, 0.0), term_s)
    term_k = np.where(degenerate, np.where(exercise, disc_k, 0.0), term_k)
    return term_s, term_k


def analytic_greeks(params: MarketParams, spec: OptionSpec, state: MarketState) -> GreekSet:
    if state.defaulted:
        return GreekSet(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    tau = spec.maturity - state.time
    if tau <= 0.0:
        raise ValueError("state.time must be strictly before maturity")
    _, q, r_c = effective_rates(params)
    term_s, term_k = _greek_terms(state.spot, spec.strike, tau, r_c, q, params.sigma)
    term_s = float(term_s)
    term_k = float(term_k)
    value = term_s - term_k
    d_f = tau * (term_k - params.beta * term_s)
    d_h = params.beta * tau * term_s
    d_rcds = -tau * value
    delta = term_s / state.spot
    if value != 0.0:
        rel_f, rel_h = d_f / value, d_h / value
    else:
        rel_f = rel_h = math.nan
    return GreekSet(value, d_f, d_h, d_rcds, delta, rel_f, rel_h)


def fd_greeks(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    bump_abs: float = 1e-6,
    spot_bump_rel: float = 1e-4,
) -> GreekSet:
    """Central-difference sensitivities for cross-checking the closed forms.

    Rate bumps are absolute and may transiently push r_cds below zero; the
    pricing kernel is analytic there so the centered difference stays valid.
    """
    if not 1e-8 <= bump_abs <= 1e-3:
        raise ValueError(f"bump_abs must lie in [1e-8, 1e-3], got {bump_abs}")
    if state.defaulted:
        return GreekSet(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def price(p: MarketParams, st: MarketState = state) -> float:
        return vulnerable_call_price(p, spec, st).value

    value = price(params)
    d_f = (
        price(with_updates(params, f=params.f + bump_abs))
        - price(with_updates(params, f=params.f - bump_abs))
    ) / (2.0 * bump_abs)
    d_h = (
        price(with_updates(params, h=params.h + bump_abs))
        - price(with_updates(params, h=params.h - bump_abs))
    ) / (2.0 * bump_abs)
    d_rcds = (
        price(with_updates(params, r_cds=params.r_cds + bump_abs))
        - price(with_updates(params, r_cds=params.r_cds - bump_abs))
    ) / (2.0 * bump_abs)
    ds = spot_bump_rel * state.spot
    up = MarketState(spot=state.spot + ds, time=state.time)
    dn = MarketState(spot=state.spot - ds, time=state.time)
    delta = (price(params, up) - price(params, dn)) / (2.0 * ds)
    if value != 0.0:
        rel_f, rel_h = d_f / value, d_h / value
    else:
        rel_f = rel_h = math.nan
    return GreekSet(value, d_f, d_h, d_rcds, delta, rel_f, rel_h)


@dataclass(frozen=True)
class SweepResult:
    """Price/sensitivity grids over two parameter axes (axis1-major)."""

    axis1_name: str
    axis1_values: np.ndarray
    axis2_name: str
    axis2_values: np.ndarray
    price: np.ndarray
    d_f: np.ndarray
    d_h: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.axis1_name},{self.axis2_name},price,d_f,d_h\n")
            for i, a in enumerate(self.axis1_values):
                for j, b in enumerate(self.axis2_values):
                    fh.write(
                        f"{a:.17g},{b:.17g},{self.price[i, j]:.17g},"
                        f"{self.d_f[i, j]:.17g},{self.d_h[i, j]:.17g}\n"
                    )

    def to_gnuplot(self, path) -> None:
        """Nonuniform-matrix layout: first row = column count then axis1
        coordinates; each later row = an axis2 coordinate then prices."""
        with open(path, "w") as fh:
            head = [f"{len(self.axis1_values)}"]
            head += [f"{a:.17g}" for a in self.axis1_values]
            fh.write(" ".join(head) + "\n")
            for j, b in enumerate(self.axis2_values):
                row = [f"{b:.17g}"]
                row += [f"{self.price[i, j]:.17g}" for i in range(len(self.axis1_values))]
                fh.write(" ".join(row) + "\n")


def sweep_surface(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    axis1: tuple[str, np.ndarray],
    axis2: tuple[str, np.ndarray],
) -> SweepResult:
    """Evaluate price, dV/df and dV/dh on the outer grid of two axes.

    Axis names come from {f, h, r_cds, sigma, beta, spot}; the two axes
    must differ.  Fully vectorized -- a 201x201 grid is one kernel call.
    """
    name1, vals1 = axis1
    name2, vals2 = axis2
    for name in (name1, name2):
        if name not in _SWEEP_AXES:
            raise InvalidAxis(f"axis {name!r} not one of {_SWEEP_AXES}")
    if name1 == name2:
        raise InvalidAxis("the two sweep axes must differ")
    vals1 = np.asarray(vals1, dtype=float)
    vals2 = np.asarray(vals2, dtype=float)
    if vals1.ndim != 1 or vals2.ndim != 1 or vals1.size < 2 or vals2.size < 2:
        raise InvalidAxis("each axis needs a 1-D array of at least two values")

    tau = spec.maturity - state.time
    if tau <= 0.0:
        raise ValueError("state.time must be strictly before maturity")

    base = {
        "f": params.f,
        "h": params.h,
        "r_cds": params.r_cds,
        "sigma": params.sigma,
        "beta": params.beta,
        "spot": state.spot,
    }
    grids = {k: np.full((vals1.size, vals2.size), v) for k, v in base.items()}
    a1, a2 = np.meshgrid(vals1, vals2, indexing="ij")
    grids[name1] = a1
    grids[name2] = a2

    f_beta = (1.0 - grids["beta"]) * grids["f"] + grids["beta"] * grids["h"]
    r_c = grids["f"] + grids["r_cds"]
    q = r_c - f_beta + params.delta_div
    term_s, term_k = _greek_terms(grids["spot"], spec.strike, tau, r_c, q, grids["sigma"])
    price = term_s - term_k
    d_f = tau * (term_k - grids["beta"] * term_s)
    d_h = grids["beta"] * tau * term_s
    return SweepResult(name1, vals1, name2, vals2, price, d_f, d_h)


def relative_sensitivity_check(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    tol: float = 1e-12,
) -> dict:
    """Verify the beta = 1 structural identities on the relative greeks.

    Requires beta == 1.  Checks |dV/df| / V == tau (within tol, relative)
    and dV/dh / V > tau strictly; raises RuntimeError on violation and
    returns the diagnostics otherwise.
    """
    if params.beta != 1.0:
        raise ValueError("relative sensitivity identities hold only for beta = 1")
    g = analytic_greeks(params, spec, state)
    if not g.value > 0.0:
        raise RuntimeError("price is not positive; relative sensitivities undefined")
    tau = spec.maturity - state.time
    gap = abs(abs(g.relative_d_f) - tau)
    if gap > tol * max(tau, 1.0):
        raise RuntimeError(f"|dV/df|/V deviates from tau by {gap:.3e}")
    if not g.relative_d_h > tau:
        raise RuntimeError("dV/dh / V fails to exceed tau strictly")
    return {
        "tau": tau,
        "relative_d_f": g.relative_d_f,
        "relative_d_h": g.relative_d_h,
        "identity_gap": gap,
        "repo_excess": g.relative_d_h - tau,
    }
