"""Parameter containers, derived-rate algebra, validation, and parameter I/O.

The model prices a European call written by a counterparty that may default
(zero recovery).  Market inputs are a treasury rate f, a repo rate h, a CDS
spread r_cds quoted for the counterparty, a dividend yield delta_div, a
lognormal volatility sigma, and a funding mix beta in [0, 1] giving the
fraction of the stock position financed through repo.

Derived rates, used everywhere downstream:

    f_beta = (1 - beta) * f + beta * h        effective funding rate
    r_c    = f + r_cds                        defaultable-bond yield
    q      = r_c - f_beta + delta_div         carry spread of the call

so that r_c - q = f_beta - delta_div holds identically.  The pre-default call
value is a Black-Scholes form in (r_c, q); see analytic.vulnerable_call_price.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import NamedTuple

__all__ = [
    "MarketParams",
    "OptionSpec",
    "DefaultModel",
    "MarketState",
    "EffectiveRates",
    "Route",
    "PriceResult",
    "ValidationReport",
    "PARAM_KEYS",
    "effective_rates",
    "validate",
    "parse_param_text",
    "load_param_file",
    "resolve_params",
    "params_to_dict",
    "example51_path",
]


@dataclass(frozen=True)
class MarketParams:
    """Constant market rates and diffusion parameters.

    Attributes:
        f: treasury (risk-free funding) rate, continuously compounded.
        h: repo rate earned on the repo-financed stock leg.
        r_cds: CDS spread quoted for the counterparty; the defaultable bond
            yields r_c = f + r_cds.
        delta_div: continuous dividend yield of the underlying.
        sigma: lognormal volatility, > 0.
        beta: fraction of the stock hedge financed via repo, in [0, 1].
            beta = 1 is pure repo funding, beta = 0 pure treasury funding.
    """

    f: float
    h: float
    r_cds: float
    sigma: float
    beta: float
    delta_div: float = 0.0


@dataclass(frozen=True)
class OptionSpec:
    """Contract terms of the vulnerable European call.

    Attributes:
        strike: strike K >= 0.
        maturity: maturity T in years, > 0.
    """

    strike: float
    maturity: float


@dataclass(frozen=True)
class DefaultModel:
    """Counterparty default-time model: exponential with constant intensity.

    The pricing measure uses intensity = r_cds (the CDS-implied value); the
    field is stored separately so a deliberate mismatch can be simulated.
    validate() warns when the two differ.
    """

    intensity: float


@dataclass(frozen=True)
class MarketState:
    """Valuation-time state: spot, calendar time, and default status."""

    spot: float
    time: float = 0.0
    defaulted: bool = False


class EffectiveRates(NamedTuple):
    f_beta: float
    q: float
    r_c: float


class Route(Enum):
    """Which engine produced a price."""

    CLOSED_FORM = "closed_form"
    PDE = "pde"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class PriceResult:
    """A price with provenance.

    std_error is 0 for deterministic routes; n is the sample count for Monte
    Carlo, the spatial grid size for the PDE, and 0 for closed forms.
    """

    value: float
    route: Route
    std_error: float = 0.0
    n: int = 0


@dataclass
class ValidationReport:
    """Outcome of validate(): hard violations and advisory warnings."""

    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def effective_rates(params: MarketParams) -> EffectiveRates:
    """Return (f_beta, q, r_c) derived from the raw market rates.

    f_beta = (1-beta) f + beta h,  r_c = f + r_cds,
    q = r_c - f_beta + delta_div, so r_c - q = f_beta - delta_div.
    q is affine in beta with slope -(h - f).
    """
    f_beta = (1.0 - params.beta) * params.f + params.beta * params.h
    r_c = params.f + params.r_cds
    q = (r_c - f_beta) + params.delta_div
    return EffectiveRates(f_beta=f_beta, q=q, r_c=r_c)


def validate(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    default_model: DefaultModel | None = None,
) -> ValidationReport:
    """Check hard invariants; report violations instead of raising.

    Warnings flag configurations that price fine but break the replication
    story: intensity 0 (default never happens, the CDS hedge degenerates) and
    intensity != r_cds (quoted spread inconsistent with the default model).
    """
    report = ValidationReport()
    v = report.violations.append

    if not params.sigma > 0.0:
        v(f"sigma must be > 0, got {params.sigma}")
    if not 0.0 <= params.beta <= 1.0:
        v(f"beta must lie in [0, 1], got {params.beta}")
    if params.r_cds < 0.0:
        v(f"r_cds must be >= 0, got {params.r_cds}")
    if params.delta_div < 0.0:
        v(f"delta_div must be >= 0, got {params.delta_div}")
    if spec.strike < 0.0:
        v(f"strike must be >= 0, got {spec.strike}")
    if not spec.maturity > 0.0:
        v(f"maturity must be > 0, got {spec.maturity}")
    if not state.spot > 0.0:
        v(f"spot must be > 0, got {state.spot}")
    if not 0.0 <= state.time < spec.maturity:
        v(f"time must satisfy 0 <= time < maturity, got {state.time}")

    if default_model is not None:
        if default_model.intensity < 0.0:
            v(f"default intensity must be >= 0, got {default_model.intensity}")
        elif default_model.intensity == 0.0:
            report.warnings.append(
                "intensity is 0: replication-degenerate (default never occurs, "
                "the CDS leg carries no risk)"
            )
        elif default_model.intensity != params.r_cds:
            report.warnings.append(
                f"intensity {default_model.intensity} != r_cds {params.r_cds}: "
                "pricing assumes the CDS-implied intensity"
            )
    return report


# ---------------------------------------------------------------------------
# Parameter files: flat key-value text or a JSON object, keys fixed below.

PARAM_KEYS = (
    "f",
    "h",
    "r_cds",
    "delta_div",
    "sigma",
    "beta",
    "lambda",
    "strike",
    "maturity",
    "spot",
    "time",
)

_REQUIRED_KEYS = ("f", "h", "r_cds", "sigma", "beta", "strike", "maturity", "spot")


def parse_param_text(text: str) -> dict[str, float]:
    """Parse a parameter mapping from JSON or flat ``key = value`` lines.

    Accepted line forms: ``key value``, ``key = value``, ``key: value``;
    blank lines and ``#`` comments are ignored.  Unknown keys are an error.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ValueError("parameter JSON must be an object")
        items = list(raw.items())
    else:
        items = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, _, val = line.partition(sep)
                    break
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"line {lineno}: cannot parse {line!r}")
                key, val = parts
            items.append((key.strip(), val.strip()))

    out: dict[str, float] = {}
    for key, val in items:
        if key not in PARAM_KEYS:
            raise ValueError(f"unknown parameter key {key!r} (allowed: {', '.join(PARAM_KEYS)})")
        if key in out:
            raise ValueError(f"duplicate parameter key {key!r}")
        try:
            out[key] = float(val)
        except (TypeError, ValueError):
            raise ValueError(f"parameter {key!r} has non-numeric value {val!r}") from None
    return out


def load_param_file(path: str | Path) -> dict[str, float]:
    return parse_param_text(Path(path).read_text())


def resolve_params(
    mapping: dict[str, float],
) -> tuple[MarketParams, OptionSpec, MarketState, DefaultModel]:
    """Build the typed parameter objects from a flat key mapping.

    Optional keys and their defaults: delta_div = 0, time = 0, and lambda
    defaults to r_cds (the pricing-measure intensity).
    """
    missing = [k for k in _REQUIRED_KEYS if k not in mapping]
    if missing:
        raise ValueError(f"missing required parameter keys: {', '.join(missing)}")
    unknown = [k for k in mapping if k not in PARAM_KEYS]
    if unknown:
        raise ValueError(f"unknown parameter keys: {', '.join(unknown)}")

    params = MarketParams(
        f=mapping["f"],
        h=mapping["h"],
        r_cds=mapping["r_cds"],
        sigma=mapping["sigma"],
        beta=mapping["beta"],
        delta_div=mapping.get("delta_div", 0.0),
    )
    spec = OptionSpec(strike=mapping["strike"], maturity=mapping["maturity"])
    state = MarketState(spot=mapping["spot"], time=mapping.get("time", 0.0))
    model = DefaultModel(intensity=mapping.get("lambda", mapping["r_cds"]))
    return params, spec, state, model


def params_to_dict(
    params: MarketParams,
    spec: OptionSpec,
    state: MarketState,
    default_model: DefaultModel,
) -> dict[str, float]:
    """Flatten the typed objects back to the canonical file keys.

    Inverse of resolve_params up to float identity, used for echoing the
    resolved configuration in CLI output (round-trip contract).
    """
    return {
        "f": params.f,
        "h": params.h,
        "r_cds": params.r_cds,
        "delta_div": params.delta_div,
        "sigma": params.sigma,
        "beta": params.beta,
        "lambda": default_model.intensity,
        "strike": spec.strike,
        "maturity": spec.maturity,
        "spot": state.spot,
        "time": state.time,
    }


def example51_path() -> Path:
    """Path of the bundled canonical example parameter file."""
    return Path(__file__).parent / "data" / "example51.json"


def with_updates(params: MarketParams, **kw: float) -> MarketParams:
    """Convenience for bumped copies (finite differences, sweeps)."""
    return replace(params, **kw)
