"""Monte Carlo pricing of the vulnerable call under the repo-drift measure.

One-step exact sampling: S_T = S_t exp((h - delta - sigma^2/2) tau + sigma
sqrt(tau) Z) with tau = T - t.  Two estimators of the same expectation:

    SurvivalWeighted:  e^{-f tau} e^{-lam tau} (S_T - K)^+
    ExplicitDefault:   e^{-f tau} 1{tau_d > tau} (S_T - K)^+

with tau_d ~ Exp(lam) drawn on a substream independent of the stock draws.
The survival-weighted estimator integrates the default indicator out
analytically, so its variance is never larger (Rao-Blackwell); the explicit
estimator exists to expose that gap and to cross-check the weighting.

Randomness is counter-based (Philox): the n-th variate of substream k under
seed s is a pure function of (s, k, n).  Paths are processed in fixed-size
batches; batch b draws its stock normals from substream 2b and its default
exponentials from substream 2b+1, so the two never share a stream and both
estimator modes consume identical stock draws.  Normals come from the
inverse CDF applied to Philox uniforms, which keeps antithetic pairs
(U, 1-U) -> (Z, -Z) exactly mirrored.  Batch results are merged with the
pairwise streaming mean/variance combination in batch order, so the result
is bit-identical for a given (seed, config, params) regardless of the worker
pool size (capped by VULNPRICER_THREADS).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri

from .core import DefaultModel, MarketParams, MarketState, OptionSpec

__all__ = [
    "McMode",
    "McConfig",
    "McEstimate",
    "InvalidConfig",
    "mc_price",
    "mc_variance_ratio",
    "worker_count",
]

BATCH_SIZE = 1 << 16


class InvalidConfig(ValueError):
    """Monte Carlo configuration that cannot produce an estimate."""


class McMode(Enum):
    SURVIVAL_WEIGHTED = "survival_weighted"
    EXPLICIT_DEFAULT = "explicit_default"


@dataclass(frozen=True)
class McConfig:
    """n_paths total paths; seed is a 64-bit integer; antithetic pairs halve
    the effective sample count used for the standard error."""

    n_paths: int
    seed: int
    mode: McMode = McMode.SURVIVAL_WEIGHTED
    antithetic: bool = False


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_paths: int
    n_effective: int
    mode: McMode


def worker_count() -> int:
    """Worker pool size, capped by the VULNPRICER_THREADS environment variable."""
    env = os.environ.get("VULNPRICER_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise InvalidConfig(f"VULNPRICER_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidConfig(f"VULNPRICER_THREADS must be >= 1, got {n}")
        return n
    return min(4, os.cpu_count() or 1)


def _substream(seed: int, stream: int) -> np.random.Generator:
    # Philox keyed by (seed, stream): counter-based, so draw n of stream k is
    # a pure function of (seed, k, n)
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def _batch_stats(params, spec, state, cfg, lam, batch_index, batch_paths):
    """(count, mean, M2) of the estimator over one batch of paths."""
    tau = spec.maturity - state.time
    drift = (params.h - params.delta_div - 0.5 * params.sigma**2) * tau
    vol = params.sigma * math.sqrt(tau)
    disc = math.exp(-params.f * tau)

    gen = _substream(cfg.seed, 2 * batch_index)
    if cfg.antithetic:
        u = gen.random(batch_paths // 2)
        z_half = ndtri(u)
        z = np.concatenate((z_half, -z_half))
    else:
        z = ndtri(gen.random(batch_paths))

    s_T = state.spot * np.exp(drift + vol * z)
    payoff = np.maximum(s_T - spec.strike, 0.0)

    if cfg.mode is McMode.SURVIVAL_WEIGHTED:
        x = (disc * math.exp(-lam * tau)) * payoff
    else:
        gen_d = _substream(cfg.seed, 2 * batch_index + 1)
        u_d = gen_d.random(batch_paths)
        with np.errstate(divide="ignore"):
            tau_d = -np.log1p(-u_d) / lam if lam > 0.0 else np.full(batch_paths, np.inf)
        x = disc * np.where(tau_d > tau, payoff, 0.0)

    if cfg.antithetic:
        half = batch_paths // 2
        x = 0.5 * (x[:half] + x[half:])

    n = x.size
    mean = float(x.mean())
    m2 = float(((x - mean) ** 2).sum())
    return n, mean, m2


def _merge(acc, part):
    """Chan pairwise combination of (count, mean, M2) accumulators."""
    n1, mu1, m21 = acc
    n2, mu2, m22 = part
    if n1 == 0:
        return part
    n = n1 + n2
    delta = mu2 - mu1
    mu = mu1 + delta * (n2 / n)
    m2 = m21 + m22 + delta * delta * (n1 * n2 / n)
    return n, mu, m2


def mc_price(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    cfg: McConfig,
    default_model: DefaultModel | None = None,
) -> McEstimate:
    """Monte Carlo estimate and standard error; 0 with no error after default.

    The intensity defaults to r_cds.  Identical (seed, cfg, params) produce a
    bit-identical estimate; both modes see the same stock draws for a given
    seed so their difference isolates the default-sampling noise.
    """
    if cfg.n_paths <= 0:
        raise InvalidConfig(f"n_paths must be >= 1, got {cfg.n_paths}")
    if cfg.antithetic and cfg.n_paths % 2:
        raise InvalidConfig("antithetic sampling needs an even n_paths")
    if state.defaulted:
        return McEstimate(0.0, 0.0, cfg.n_paths, 0, cfg.mode)
    if spec.maturity <= state.time:
        raise ValueError("state.time must be strictly before maturity")
    lam = params.r_cds if default_model is None else default_model.intensity
    if lam < 0.0:
        raise InvalidConfig(f"default intensity must be >= 0, got {lam}")

    sizes = []
    remaining = cfg.n_paths
    while remaining > 0:
        take = min(BATCH_SIZE, remaining)
        if cfg.antithetic and take % 2:
            take -= 1  # cannot happen with even n_paths and even BATCH_SIZE
        sizes.append(take)
        remaining -= take

    def run(i_size):
        i, size = i_size
        return _batch_stats(params, spec, state, cfg, lam, i, size)

    if len(sizes) > 1 and worker_count() > 1:
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            parts = list(pool.map(run, enumerate(sizes)))
    else:
        parts = [run(item) for item in enumerate(sizes)]

    acc = (0, 0.0, 0.0)
    for part in parts:  # fixed batch order keeps the reduction deterministic
        acc = _merge(acc, part)
    n_eff, mean, m2 = acc

    if n_eff > 1 and m2 > 0.0:
        std_error = math.sqrt(m2 / (n_eff - 1)) / math.sqrt(n_eff)
    else:
        std_error = 0.0
    return McEstimate(mean, std_error, cfg.n_paths, n_eff, cfg.mode)


def mc_variance_ratio(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    cfg: McConfig,
    default_model: DefaultModel | None = None,
) -> float:
    """Var(ExplicitDefault) / Var(SurvivalWeighted) on shared stock draws.

    >= 1 up to sampling noise (the weighted estimator conditions the default
    indicator out); exactly 1 when the intensity is 0 because the two
    estimators then produce identical samples.
    """
    from dataclasses import replace

    sw = mc_price(params, spec, state, replace(cfg, mode=McMode.SURVIVAL_WEIGHTED), default_model)
    ed = mc_price(params, spec, state, replace(cfg, mode=McMode.EXPLICIT_DEFAULT), default_model)
    if sw.std_error == 0.0 and ed.std_error == 0.0:
        return 1.0
    if sw.std_error == 0.0:
        return math.inf
    return (ed.std_error / sw.std_error) ** 2
