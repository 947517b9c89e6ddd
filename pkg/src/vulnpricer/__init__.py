"""Pricing and sensitivities for counterparty-defaultable European calls.

The model prices a call whose payoff is wiped out at counterparty default
(zero recovery), under three flat rates -- treasury funding f, repo funding
h, counterparty CDS spread r_cds -- with a fraction beta of the stock
position financed through repo.  Alongside the closed form there are
finite-difference and Monte Carlo routes, funding/credit greeks, parameter
sweeps, CDS spread computation and discrete replication experiments.
"""

from .analytic import (
    BsInputs,
    ExponentialSurvival,
    PiecewiseConstantIntensity,
    TabulatedSurvival,
    analytic_delta,
    bond_price,
    bs_call_div,
    cds_fair_spread,
    norm_cdf,
    vulnerable_call_price,
    vulnerable_call_price_acf,
)
from .core import (
    PARAM_KEYS,
    DefaultModel,
    EffectiveRates,
    MarketParams,
    MarketState,
    OptionSpec,
    PriceResult,
    Route,
    ValidationReport,
    effective_rates,
    example51_path,
    load_param_file,
    params_to_dict,
    parse_param_text,
    resolve_params,
    validate,
    with_updates,
)
from .greeks import (
    GreekSet,
    InvalidAxis,
    SweepResult,
    analytic_greeks,
    fd_greeks,
    relative_sensitivity_check,
    sweep_surface,
)
from .hedging import (
    BucketStats,
    HedgeErrorSummary,
    HedgeRunReport,
    RealWorldModel,
    hedge_error_distribution,
    replicate_bond,
    replicate_option,
)
from .mc import (
    BATCH_SIZE,
    InvalidConfig,
    McConfig,
    McEstimate,
    McMode,
    mc_price,
    mc_variance_ratio,
    worker_count,
)
from .pde import (
    ConvergenceReport,
    GridSpec,
    GridTooCoarse,
    NonConvergence,
    PdeSolution,
    Scheme,
    convergence_study,
    solve_pde,
    thomas_factor,
    thomas_solve,
)

__version__ = "0.1.0"

__all__ = [
    "BATCH_SIZE",
    "BsInputs",
    "BucketStats",
    "ConvergenceReport",
    "DefaultModel",
    "EffectiveRates",
    "ExponentialSurvival",
    "GreekSet",
    "GridSpec",
    "GridTooCoarse",
    "HedgeErrorSummary",
    "HedgeRunReport",
    "InvalidAxis",
    "InvalidConfig",
    "MarketParams",
    "MarketState",
    "McConfig",
    "McEstimate",
    "McMode",
    "NonConvergence",
    "OptionSpec",
    "PARAM_KEYS",
    "PdeSolution",
    "PiecewiseConstantIntensity",
    "PriceResult",
    "RealWorldModel",
    "Route",
    "SweepResult",
    "TabulatedSurvival",
    "ValidationReport",
    "analytic_delta",
    "analytic_greeks",
    "bond_price",
    "bs_call_div",
    "cds_fair_spread",
    "convergence_study",
    "effective_rates",
    "example51_path",
    "fd_greeks",
    "hedge_error_distribution",
    "load_param_file",
    "mc_price",
    "mc_variance_ratio",
    "norm_cdf",
    "params_to_dict",
    "parse_param_text",
    "relative_sensitivity_check",
    "replicate_bond",
    "replicate_option",
    "resolve_params",
    "solve_pde",
    "sweep_surface",
    "thomas_factor",
    "thomas_solve",
    "validate",
    "vulnerable_call_price",
    "vulnerable_call_price_acf",
    "with_updates",
    "worker_count",
    "__version__",
]
