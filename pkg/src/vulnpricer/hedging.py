"""Discrete-time replication experiments under a real-world measure.

Paths evolve under dS = mu S dt + sigma S dW with an independent exponential
default clock of intensity lambda_p; neither mu nor lambda_p needs to match
the pricing measure (the hedge is self-financing, so the terminal error
converging to 0 as steps refine is measure-independent).

Bond replication (short protection + treasury): at each step hold
phi1 = -e^{-(kappa+f)(T-t)} CDS contracts and keep the wealth in the
funding account.  The CDS mark jumps to 1 at default and the premium kappa
accrues against the protection seller, so the wealth recursion is

    V_{k+1} = V_k + phi1 (dS_cds - kappa dt) + phi2 dB_f,

with simple accrual dB_f = B_f f dt.  On no-default paths V_T -> 1 at order
dt; at default the jump leg liquidates the position to ~0 within one step of
accrual.

Option replication: hold Delta = e^{-q tau} N(d1) stock equivalents, a
fraction beta financed through repo and 1 - beta outright, the option value
parked in defaultable bonds (P_t / B_t units) and the stock financing drawn
from the treasury account.  At default the bond position loses exactly the
carried option value, collapsing the portfolio to the (worthless) claim; on
survival the terminal error is the usual discrete-delta-hedging residual
with RMS ~ sqrt(dt).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .analytic import _call_kernel, norm_cdf
from .core import MarketParams, MarketState, OptionSpec, effective_rates

__all__ = [
    "RealWorldModel",
    "HedgeRunReport",
    "BucketStats",
    "HedgeErrorSummary",
    "replicate_bond",
    "replicate_option",
    "hedge_error_distribution",
]

_SELF_FINANCING_TOL = 1e-12


@dataclass(frozen=True)
class RealWorldModel:
    """Physical-measure drift and default intensity for simulated paths."""

    mu: float
    lambda_p: float

    def __post_init__(self):
        if self.lambda_p < 0.0:
            raise ValueError(f"lambda_p must be >= 0, got {self.lambda_p}")


@dataclass
class HedgeRunReport:
    """Single-path replication record.

    holdings maps leg name -> per-rebalance units; wealth and spot include
    the terminal row (at default time or maturity).
    """

    times: np.ndarray
    spot: np.ndarray
    wealth: np.ndarray
    holdings: dict[str, np.ndarray]
    target: np.ndarray
    defaulted: bool
    default_time: float | None
    payoff: float
    terminal_error: float
    rebalance_count: int
    n_steps: int

    def to_csv(self, path) -> None:
        legs = sorted(self.holdings)
        with open(path, "w") as fh:
            fh.write("step,t,spot,wealth,target," + ",".join(legs) + "\n")
            for i, t in enumerate(self.times):
                row = [f"{i}", f"{t:.17g}", f"{self.spot[i]:.17g}",
                       f"{self.wealth[i]:.17g}", f"{self.target[i]:.17g}"]
                for leg in legs:
                    h = self.holdings[leg]
                    row.append(f"{h[i]:.17g}" if i < len(h) else "")
                fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class BucketStats:
    count: int
    mean: float
    rms: float
    max_abs: float


@dataclass(frozen=True)
class HedgeErrorSummary:
    n_paths: int
    n_steps: int
    initial_value: float
    survived: BucketStats
    defaulted: BucketStats
    overall_rms: float


def _bucket(errors: np.ndarray) -> BucketStats:
    if errors.size == 0:
        return BucketStats(0, 0.0, 0.0, 0.0)
    return BucketStats(
        count=int(errors.size),
        mean=float(errors.mean()),
        rms=float(np.sqrt(np.mean(errors**2))),
        max_abs=float(np.abs(errors).max()),
    )


def _substream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def _default_times(rw: RealWorldModel, start: float, n_paths: int, seed: int) -> np.ndarray:
    out = np.empty(n_paths)
    for p in range(n_paths):
        u = _substream(seed, 2 * p + 1).random()
        if rw.lambda_p > 0.0:
            out[p] = start - math.log1p(-u) / rw.lambda_p
        else:
            out[p] = math.inf
    return out


def replicate_bond(
    params: MarketParams,
    maturity: float,
    rw: RealWorldModel,
    n_steps: int,
    seed: int,
    start_time: float = 0.0,
) -> HedgeRunReport:
    """Replicate the zero-recovery bond with the CDS + treasury strategy.

    kappa is taken as the quoted r_cds (the fair spread of the exponential
    clock).  The residual between tracked wealth and the bond value is the
    simple-accrual discretization error, O(dt).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if maturity <= start_time:
        raise ValueError("maturity must exceed start_time")
    kappa = params.r_cds
    f = params.f
    dt = (maturity - start_time) / n_steps
    tau_d = float(_default_times(rw, start_time, 1, seed)[0])

    def target(t):
        return math.exp(-(kappa + f) * (maturity - t))

    times = [start_time]
    wealth = [target(start_time)]
    targets = [target(start_time)]
    cds_units = []
    treasury_units = []

    v = wealth[0]
    b_fund = 1.0
    defaulted = False
    default_time = None
    rebalances = 0
    for k in range(n_steps):
        t_k = start_time + k * dt
        phi1 = -target(t_k)
        phi2 = v / b_fund
        # pre-default CDS marks at 0, so the post-trade value is phi2 * b_fund
        if abs(phi2 * b_fund - v) > _SELF_FINANCING_TOL * (1.0 + abs(v)):
            raise RuntimeError("self-financing violated in bond replication")
        cds_units.append(phi1)
        treasury_units.append(phi2)
        rebalances += 1
        if t_k < tau_d <= t_k + dt:
            dtp = tau_d - t_k
            v = v + phi1 * (1.0 - kappa * dtp) + phi2 * b_fund * f * dtp
            defaulted = True
            default_time = tau_d
            times.append(tau_d)
            wealth.append(v)
            targets.append(0.0)
            break
        v = v + phi1 * (-kappa * dt) + phi2 * b_fund * f * dt
        b_fund *= 1.0 + f * dt
        times.append(t_k + dt)
        wealth.append(v)
        targets.append(target(t_k + dt))

    payoff = 0.0 if defaulted else 1.0
    return HedgeRunReport(
        times=np.array(times),
        spot=np.zeros(len(times)),
        wealth=np.array(wealth),
        holdings={"cds": np.array(cds_units), "treasury": np.array(treasury_units)},
        target=np.array(targets),
        defaulted=defaulted,
        default_time=default_time,
        payoff=payoff,
        terminal_error=v - payoff,
        rebalance_count=rebalances,
        n_steps=n_steps,
    )


def _delta_kernel(s, k, tau, r_c, q, sigma):
    if k <= 0.0:
        return np.exp(-q * tau) * np.ones_like(np.asarray(s, dtype=float))
    vol = sigma * math.sqrt(tau)
    d1 = (np.log(np.asarray(s, dtype=float) / k) + (r_c - q + 0.5 * sigma * sigma) * tau) / vol
    return np.exp(-q * tau) * norm_cdf(d1)


def _option_hedge_paths(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    rw: RealWorldModel,
    n_steps: int,
    n_paths: int,
    seed: int,
    record: bool = False,
):
    """Vectorized option replication across paths.

    Returns (errors, defaulted_mask, default_times, rebalances, record dict).
    Bond-leg bookkeeping is by value: the position is sized to the current
    option value, gains accrue at the bond return, and at default the leg
    loses exactly the carried value.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    f_beta, q_rate, r_c = effective_rates(params)
    f, h, beta = params.f, params.h, params.beta
    delta_div, sigma, mu = params.delta_div, params.sigma, rw.mu
    strike = spec.strike
    t0 = state.time
    tau_total = spec.maturity - t0
    if tau_total <= 0.0:
        raise ValueError("state.time must be strictly before maturity")
    dt = tau_total / n_steps
    sqdt = math.sqrt(dt)

    normals = np.empty((n_paths, n_steps))
    for p in range(n_paths):
        normals[p] = ndtri(_substream(seed, 2 * p).random(n_steps))
    tau_d = _default_times(rw, t0, n_paths, seed)

    spot = np.full(n_paths, float(state.spot))
    value0 = float(_call_kernel(state.spot, strike, tau_total, r_c, q_rate, sigma))
    wealth = np.full(n_paths, value0)
    active = np.ones(n_paths, dtype=bool)
    errors = np.zeros(n_paths)
    defaulted = np.zeros(n_paths, dtype=bool)
    rebalances = np.zeros(n_paths, dtype=int)
    bond_gain_factor = math.expm1(r_c * dt)

    rec = None
    if record:
        rec = {
            "times": [t0],
            "spot": [float(state.spot)],
            "wealth": [value0],
            "target": [value0],
            "treasury": [],
            "stock": [],
            "repo": [],
            "bond": [],
        }
    b_fund = 1.0

    for k in range(n_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        t_k = t0 + k * dt
        tau_k = tau_total - k * dt
        s = spot[idx]
        v = wealth[idx]

        option_value = _call_kernel(s, strike, tau_k, r_c, q_rate, sigma)
        option_value = np.atleast_1d(option_value)
        delta = np.atleast_1d(_delta_kernel(s, strike, tau_k, r_c, q_rate, sigma))
        u_stock = (1.0 - beta) * delta
        u_repo = beta * delta
        v_bond = option_value
        v_treasury = v - u_stock * s - v_bond

        residual = np.abs((v_treasury + u_stock * s + v_bond) - v)
        if np.any(residual > _SELF_FINANCING_TOL * (1.0 + np.abs(v))):
            raise RuntimeError("self-financing violated in option replication")
        rebalances[idx] += 1

        if record:
            rec["treasury"].append(float(v_treasury[0] / b_fund))
            rec["stock"].append(float(u_stock[0]))
            rec["repo"].append(float(u_repo[0]))
            rec["bond"].append(float(v_bond[0] / math.exp(-r_c * tau_k)))

        z = normals[idx, k]
        in_step = (tau_d[idx] > t_k) & (tau_d[idx] <= t_k + dt)

        if np.any(in_step):
            sub = np.nonzero(in_step)[0]
            dtp = tau_d[idx[sub]] - t_k
            s_tau = s[sub] * np.exp((mu - 0.5 * sigma * sigma) * dtp + sigma * np.sqrt(dtp) * z[sub])
            ds_ = s_tau - s[sub]
            v_tau = (
                v[sub]
                + v_treasury[sub] * f * dtp
                + u_stock[sub] * (ds_ + delta_div * s[sub] * dtp)
                + u_repo[sub] * (ds_ + (delta_div - h) * s[sub] * dtp)
                - v_bond[sub]
            )
            gidx = idx[sub]
            errors[gidx] = v_tau  # vulnerable claim pays nothing at default
            defaulted[gidx] = True
            active[gidx] = False
            spot[gidx] = s_tau
            wealth[gidx] = v_tau

        alive = np.nonzero(~in_step)[0]
        if alive.size:
            s_new = s[alive] * np.exp((mu - 0.5 * sigma * sigma) * dt + sigma * sqdt * z[alive])
            ds_ = s_new - s[alive]
            v_new = (
                v[alive]
                + v_treasury[alive] * f * dt
                + u_stock[alive] * (ds_ + delta_div * s[alive] * dt)
                + u_repo[alive] * (ds_ + (delta_div - h) * s[alive] * dt)
                + v_bond[alive] * bond_gain_factor
            )
            gidx = idx[alive]
            spot[gidx] = s_new
            wealth[gidx] = v_new

        b_fund *= 1.0 + f * dt
        if record:
            rec["times"].append(float(tau_d[0]) if defaulted[0] else t_k + dt)
            rec["spot"].append(float(spot[0]))
            rec["wealth"].append(float(wealth[0]))
            if defaulted[0]:
                rec["target"].append(0.0)
            else:
                tau_next = tau_total - (k + 1) * dt
                if tau_next > 0.0:
                    rec["target"].append(
                        float(_call_kernel(spot[0], strike, tau_next, r_c, q_rate, sigma))
                    )
                else:
                    rec["target"].append(float(max(spot[0] - strike, 0.0)))
            if not active[0]:
                break

    surv = active
    if np.any(surv):
        errors[surv] = wealth[surv] - np.maximum(spot[surv] - strike, 0.0)
    return errors, defaulted, tau_d, rebalances, rec


def replicate_option(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    rw: RealWorldModel,
    n_steps: int,
    seed: int,
) -> HedgeRunReport:
    """Run one replication path and record the full trajectory."""
    errors, defaulted, tau_d, rebalances, rec = _option_hedge_paths(
        params, spec, state, rw, n_steps, 1, seed, record=True
    )
    was_default = bool(defaulted[0])
    payoff = 0.0 if was_default else float(max(rec["spot"][-1] - spec.strike, 0.0))
    return HedgeRunReport(
        times=np.array(rec["times"]),
        spot=np.array(rec["spot"]),
        wealth=np.array(rec["wealth"]),
        holdings={
            "treasury": np.array(rec["treasury"]),
            "stock": np.array(rec["stock"]),
            "repo": np.array(rec["repo"]),
            "bond": np.array(rec["bond"]),
        },
        target=np.array(rec["target"]),
        defaulted=was_default,
        default_time=float(tau_d[0]) if was_default else None,
        payoff=payoff,
        terminal_error=float(errors[0]),
        rebalance_count=int(rebalances[0]),
        n_steps=n_steps,
    )


def hedge_error_distribution(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    rw: RealWorldModel,
    n_steps: int,
    n_paths: int,
    seed: int,
) -> HedgeErrorSummary:
    """Terminal-error statistics over many paths, split by default status."""
    errors, defaulted, _, _, _ = _option_hedge_paths(
        params, spec, state, rw, n_steps, n_paths, seed, record=False
    )
    _, q_rate, r_c = effective_rates(params)
    initial = float(
        _call_kernel(
            state.spot, spec.strike, spec.maturity - state.time, r_c, q_rate, params.sigma
        )
    )
    return HedgeErrorSummary(
        n_paths=n_paths,
        n_steps=n_steps,
        initial_value=initial,
        survived=_bucket(errors[~defaulted]),
        defaulted=_bucket(errors[defaulted]),
        overall_rms=float(np.sqrt(np.mean(errors**2))),
    )
