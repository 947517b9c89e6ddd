"""Command-line front end.

Subcommands: price, pde, mc, greeks, sweep, hedge, cds-spread, xcheck.
Parameters come from --params FILE (JSON object or key=value lines; the
literal name 'example51' loads the bundled demo file) overlaid with
repeatable --set KEY=VALUE flags, which win over the file.

Reports go to stdout (or --out) as json, csv or text.  JSON is rendered by
a fixed-order serializer with every float formatted via '%.17g', so a given
version + inputs + seed reproduces byte-identical output; wall-clock time
goes to stderr only.

Exit codes: 0 success, 1 usage, 2 parameter/validation error, 3 numerical
failure (non-convergence, too-coarse grid, no CDS exposure window, invalid
simulation config, or a failed xcheck consistency gate).
"""

from __future__ import annotations

import argparse
import csv as _csv
import io
import json as _json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .analytic import (
    ExponentialSurvival,
    cds_fair_spread,
    vulnerable_call_price,
    vulnerable_call_price_acf,
)
from .core import (
    MarketState,
    effective_rates,
    example51_path,
    load_param_file,
    params_to_dict,
    resolve_params,
    validate,
)
from .greeks import InvalidAxis, analytic_greeks, fd_greeks, sweep_surface
from .hedging import RealWorldModel, hedge_error_distribution, replicate_bond, replicate_option
from .mc import InvalidConfig, McConfig, McMode, mc_price
from .pde import GridSpec, GridTooCoarse, NonConvergence, Scheme, solve_pde

__all__ = ["build_parser", "run", "main"]


class ParamError(Exception):
    """Bad or missing parameters / flags: exit code 2."""


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    validation problems, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# output formatting


def _float_repr(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    return format(x, ".17g")


def to_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: insertion-ordered keys, floats via %.17g."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{_json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [f"{inner}{to_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float_repr(float(obj))
    if isinstance(obj, str):
        return _json.dumps(obj)
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _flatten(d: dict, parent: str = ""):
    for k, v in d.items():
        key = f"{parent}.{k}" if parent else str(k)
        if isinstance(v, dict):
            yield from _flatten(v, key)
        else:
            yield key, v


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def format_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(report) + "\n"
    flat = list(_flatten(report))
    if fmt == "csv":
        buf = io.StringIO()
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow([k for k, _ in flat])
        writer.writerow([_cell(v) for _, v in flat])
        return buf.getvalue()
    width = max(len(k) for k, _ in flat)
    return "".join(f"{k.ljust(width)} = {_cell(v) if v is not None else 'none'}\n" for k, v in flat)


def _emit(report: dict, args) -> None:
    text = format_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# parameter plumbing


def _load_mapping(args) -> dict[str, float]:
    mapping: dict[str, float] = {}
    if args.params:
        path = example51_path() if args.params == "example51" else Path(args.params)
        if not path.exists():
            raise ParamError(f"parameter file not found: {path}")
        try:
            mapping.update(load_param_file(path))
        except ValueError as exc:
            raise ParamError(str(exc)) from exc
    for item in args.overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ParamError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            mapping[key.strip()] = float(raw)
        except ValueError as exc:
            raise ParamError(f"--set {key}: not a number: {raw!r}") from exc
    if not mapping:
        raise ParamError("no parameters given; use --params FILE and/or --set KEY=VALUE")
    return mapping


def _resolve(args):
    try:
        params, spec, state, model = resolve_params(_load_mapping(args))
    except ValueError as exc:
        raise ParamError(str(exc)) from exc
    if getattr(args, "defaulted", False):
        state = MarketState(spot=state.spot, time=state.time, defaulted=True)
    report = validate(params, spec, state, model)
    if not report.ok:
        raise ParamError("; ".join(report.violations))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return params, spec, state, model


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise ParamError(f"--grid expects NxM (e.g. 400x400), got {text!r}") from exc


def _parse_axis(text: str):
    name, sep, rng = text.partition("=")
    parts = rng.split(":")
    if not sep or len(parts) != 3:
        raise ParamError(f"axis expects NAME=LO:HI:N, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ParamError(f"axis expects numeric LO:HI:N, got {rng!r}") from exc
    if n < 2:
        raise ParamError("axis needs at least two points")
    return name.strip(), np.linspace(lo, hi, n)


def _grid_spec(args, params, spec, state) -> GridSpec:
    n_space, n_time = _parse_grid(args.grid)
    scheme = Scheme.CRANK_NICOLSON if args.scheme == "cn" else Scheme.EXPLICIT_EULER
    try:
        if args.s_max_mult is not None:
            return GridSpec(n_space=n_space, n_time=n_time, s_max_mult=args.s_max_mult, scheme=scheme)
        return GridSpec.suggested(params, spec, state, n_space=n_space, n_time=n_time, scheme=scheme)
    except ValueError as exc:
        raise ParamError(str(exc)) from exc


def _rel(diff: float, ref: float) -> float:
    if diff == 0.0:
        return 0.0
    if ref == 0.0:
        return math.inf
    return abs(diff) / abs(ref)


def _se_ratio(diff: float, se: float) -> float:
    if diff == 0.0:
        return 0.0
    if se == 0.0:
        return math.inf
    return abs(diff) / se


# ---------------------------------------------------------------------------
# subcommand handlers (each returns (report, exit_code))


def _cmd_price(args):
    params, spec, state, model = _resolve(args)
    closed = vulnerable_call_price(params, spec, state)
    alt = vulnerable_call_price_acf(params, spec, state, model)
    f_beta, q, r_c = effective_rates(params)
    diff = closed.value - alt.value
    report = {
        "command": "price",
        "value": closed.value,
        "value_alt": alt.value,
        "agreement_diff": diff,
        "agreement_rel": _rel(diff, closed.value),
        "route": closed.route.value,
        "f_beta": f_beta,
        "q": q,
        "r_c": r_c,
        "defaulted": state.defaulted,
        "params": params_to_dict(params, spec, state, model),
    }
    return report, 0


def _cmd_pde(args):
    params, spec, state, model = _resolve(args)
    grid = _grid_spec(args, params, spec, state)
    solution = solve_pde(params, spec, state, grid=grid, tolerance=args.tolerance)
    if args.dump_grid:
        solution.to_csv(args.dump_grid)
    closed = vulnerable_call_price(params, spec, state).value
    diff = solution.price - closed
    report = {
        "command": "pde",
        "value": solution.price,
        "richardson_error": solution.richardson_error,
        "n_space": solution.n_space,
        "n_time": solution.n_time,
        "scheme": solution.scheme.value,
        "s_max_mult": grid.s_max_mult,
        "closed_form": closed,
        "abs_diff": diff,
        "rel_diff": _rel(diff, closed),
        "grid_file": args.dump_grid,
        "defaulted": state.defaulted,
        "params": params_to_dict(params, spec, state, model),
    }
    return report, 0


def _mc_mode(text: str) -> McMode:
    return McMode.SURVIVAL_WEIGHTED if text == "survival-weighted" else McMode.EXPLICIT_DEFAULT


def _cmd_mc(args):
    if args.paths < 1000:
        raise ParamError(f"--paths must be >= 1000, got {args.paths}")
    params, spec, state, model = _resolve(args)
    cfg = McConfig(
        n_paths=args.paths, seed=args.seed, mode=_mc_mode(args.mode), antithetic=args.antithetic
    )
    est = mc_price(params, spec, state, cfg, model)
    closed = vulnerable_call_price(params, spec, state).value
    diff = est.value - closed
    report = {
        "command": "mc",
        "value": est.value,
        "std_error": est.std_error,
        "n_paths": est.n_paths,
        "n_effective": est.n_effective,
        "mode": est.mode.value,
        "antithetic": args.antithetic,
        "seed": args.seed,
        "closed_form": closed,
        "diff": diff,
        "diff_in_se": _se_ratio(diff, est.std_error),
        "defaulted": state.defaulted,
        "params": params_to_dict(params, spec, state, model),
    }
    return report, 0


def _cmd_greeks(args):
    params, spec, state, model = _resolve(args)
    g = analytic_greeks(params, spec, state)
    report = {
        "command": "greeks",
        "value": g.value,
        "d_f": g.d_f,
        "d_h": g.d_h,
        "d_rcds": g.d_rcds,
        "delta": g.delta,
        "relative_d_f": g.relative_d_f,
        "relative_d_h": g.relative_d_h,
        "defaulted": state.defaulted,
    }
    if args.check_fd:
        fd = fd_greeks(params, spec, state, bump_abs=args.bump)
        pairs = [
            (g.d_f, fd.d_f),
            (g.d_h, fd.d_h),
            (g.d_rcds, fd.d_rcds),
            (g.delta, fd.delta),
        ]
        max_rel = max(_rel(a - b, a if a != 0.0 else 1.0) for a, b in pairs)
        report.update(
            {
                "fd_d_f": fd.d_f,
                "fd_d_h": fd.d_h,
                "fd_d_rcds": fd.d_rcds,
                "fd_delta": fd.delta,
                "fd_max_rel_diff": max_rel,
            }
        )
    report["params"] = params_to_dict(params, spec, state, model)
    return report, 0


def _cmd_sweep(args):
    params, spec, state, model = _resolve(args)
    if state.defaulted:
        raise ParamError("sweep of a defaulted state is identically zero")
    try:
        result = sweep_surface(params, spec, state, _parse_axis(args.axis1), _parse_axis(args.axis2))
    except InvalidAxis as exc:
        raise ParamError(str(exc)) from exc
    csv_path = Path(args.csv)
    gp_path = csv_path.with_suffix(".gp")
    result.to_csv(csv_path)
    result.to_gnuplot(gp_path)
    plot_path = None
    if args.plot is not None:
        from . import plots

        plot_path = args.plot if args.plot else str(csv_path.with_suffix(".png"))
        plots.render_sweep_surface(result, plot_path)
    report = {
        "command": "sweep",
        "axis1": {
            "name": result.axis1_name,
            "lo": float(result.axis1_values[0]),
            "hi": float(result.axis1_values[-1]),
            "n": int(result.axis1_values.size),
        },
        "axis2": {
            "name": result.axis2_name,
            "lo": float(result.axis2_values[0]),
            "hi": float(result.axis2_values[-1]),
            "n": int(result.axis2_values.size),
        },
        "price_min": float(result.price.min()),
        "price_max": float(result.price.max()),
        "d_f_min": float(result.d_f.min()),
        "d_f_max": float(result.d_f.max()),
        "d_h_min": float(result.d_h.min()),
        "d_h_max": float(result.d_h.max()),
        "csv_file": str(csv_path),
        "gnuplot_file": str(gp_path),
        "plot_file": plot_path,
        "params": params_to_dict(params, spec, state, model),
    }
    return report, 0


def _cmd_hedge(args):
    params, spec, state, model = _resolve(args)
    if state.defaulted:
        raise ParamError("cannot start a replication experiment after default")
    if args.steps < 1:
        raise ParamError("--steps must be >= 1")
    if args.paths < 1:
        raise ParamError("--paths must be >= 1")
    lambda_p = model.intensity if args.lambda_p is None else args.lambda_p
    try:
        rw = RealWorldModel(mu=args.mu, lambda_p=lambda_p)
    except ValueError as exc:
        raise ParamError(str(exc)) from exc

    single = args.target == "bond" or args.trajectory or args.plot is not None
    report = {
        "command": "hedge",
        "target": args.target,
        "mode": "single_path" if single else "distribution",
        "n_steps": args.steps,
        "seed": args.seed,
        "mu": args.mu,
        "lambda_p": lambda_p,
    }
    if single:
        if args.target == "bond":
            run = replicate_bond(
                params, spec.maturity, rw, args.steps, args.seed, start_time=state.time
            )
        else:
            run = replicate_option(params, spec, state, rw, args.steps, args.seed)
        trajectory = None
        if args.trajectory:
            run.to_csv(args.trajectory)
            trajectory = args.trajectory
        plot_path = None
        if args.plot is not None:
            from . import plots

            plot_path = args.plot if args.plot else "hedge.png"
            plots.render_hedge_run(run, plot_path)
        report.update(
            {
                "path_defaulted": run.defaulted,
                "default_time": run.default_time,
                "payoff": run.payoff,
                "terminal_wealth": float(run.wealth[-1]),
                "terminal_error": run.terminal_error,
                "rebalance_count": run.rebalance_count,
                "trajectory_file": trajectory,
                "plot_file": plot_path,
            }
        )
    else:
        summary = hedge_error_distribution(
            params, spec, state, rw, args.steps, args.paths, args.seed
        )
        report.update(
            {
                "n_paths": summary.n_paths,
                "initial_value": summary.initial_value,
                "survived": {
                    "count": summary.survived.count,
                    "mean": summary.survived.mean,
                    "rms": summary.survived.rms,
                    "max_abs": summary.survived.max_abs,
                },
                "path_defaulted": {
                    "count": summary.defaulted.count,
                    "mean": summary.defaulted.mean,
                    "rms": summary.defaulted.rms,
                    "max_abs": summary.defaulted.max_abs,
                },
                "overall_rms": summary.overall_rms,
                "rms_relative": summary.overall_rms / summary.initial_value
                if summary.initial_value
                else math.inf,
            }
        )
    report["params"] = params_to_dict(params, spec, state, model)
    return report, 0


def _cmd_cds_spread(args):
    params, spec, state, model = _resolve(args)
    survival = ExponentialSurvival(model.intensity)
    spread = cds_fair_spread(survival, params.f, state.time, spec.maturity, method=args.method)
    report = {
        "command": "cds-spread",
        "spread": spread,
        "intensity": model.intensity,
        "f": params.f,
        "t": state.time,
        "T": spec.maturity,
        "method": args.method,
        "flat_identity_gap": abs(spread - model.intensity),
        "params": params_to_dict(params, spec, state, model),
    }
    return report, 0


def _cmd_xcheck(args):
    params, spec, state, model = _resolve(args)
    closed = vulnerable_call_price(params, spec, state).value
    acf = vulnerable_call_price_acf(params, spec, state, model).value
    grid = _grid_spec(args, params, spec, state)
    pde_value = solve_pde(params, spec, state, grid=grid).price
    cfg = McConfig(
        n_paths=args.paths, seed=args.seed, mode=_mc_mode(args.mode), antithetic=args.antithetic
    )
    est = mc_price(params, spec, state, cfg, model)

    exact_regime = params.beta == 1.0 and model.intensity == params.r_cds
    acf_rel = _rel(closed - acf, closed)
    acf_pass = acf_rel <= 1e-12 if exact_regime else True
    pde_rel = _rel(pde_value - closed, closed)
    pde_pass = pde_rel <= 5e-4
    mc_se = _se_ratio(est.value - closed, est.std_error)
    mc_pass = mc_se <= 3.0
    all_pass = acf_pass and pde_pass and mc_pass

    report = {
        "command": "xcheck",
        "value_closed": closed,
        "value_acf": acf,
        "value_pde": pde_value,
        "value_mc": est.value,
        "mc_std_error": est.std_error,
        "checks": {
            "closed_vs_acf": {
                "rel_diff": acf_rel,
                "tolerance": 1e-12 if exact_regime else None,
                "exact_regime": exact_regime,
                "pass": acf_pass,
            },
            "closed_vs_pde": {
                "rel_diff": pde_rel,
                "tolerance": 5e-4,
                "pass": pde_pass,
            },
            "closed_vs_mc": {
                "abs_diff": est.value - closed,
                "diff_in_se": mc_se,
                "band": 3.0,
                "pass": mc_pass,
            },
        },
        "pass": all_pass,
        "defaulted": state.defaulted,
        "params": params_to_dict(params, spec, state, model),
    }
    return report, 0 if all_pass else 3


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="vulnpricer",
        description="Pricing, sensitivities and replication checks for "
        "counterparty-defaultable European calls and zero-recovery bonds "
        "under split treasury/repo funding.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--params",
        metavar="FILE",
        help="parameter file (JSON object or key=value lines); "
        "'example51' loads the bundled demo",
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one parameter (repeatable, wins over --params)",
    )
    common.add_argument("--out", metavar="FILE", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv", "text"), default="json")
    common.add_argument(
        "--defaulted", action="store_true", help="price as if the counterparty already defaulted"
    )

    grid_flags = argparse.ArgumentParser(add_help=False)
    grid_flags.add_argument("--grid", default="400x400", metavar="NxM",
                            help="space x time grid (default 400x400)")
    grid_flags.add_argument("--scheme", choices=("cn", "explicit"), default="cn")
    grid_flags.add_argument("--s-max-mult", type=float, default=None,
                            help="upper boundary multiple of max(spot, strike)")

    mc_flags = argparse.ArgumentParser(add_help=False)
    mc_flags.add_argument("--paths", type=int, default=100000)
    mc_flags.add_argument("--seed", type=int, default=0)
    mc_flags.add_argument("--mode", choices=("survival-weighted", "explicit-default"),
                          default="survival-weighted")
    mc_flags.add_argument("--antithetic", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sub.add_parser("price", parents=[common], help="closed-form price plus the alternate route")

    p_pde = sub.add_parser("pde", parents=[common, grid_flags], help="finite-difference price")
    p_pde.add_argument("--tolerance", type=float, default=None,
                       help="fail (exit 3) if the refinement error estimate exceeds this")
    p_pde.add_argument("--dump-grid", metavar="FILE", help="write the full (t,s,v) grid as CSV")

    sub.add_parser("mc", parents=[common, mc_flags], help="Monte Carlo price")

    p_greeks = sub.add_parser("greeks", parents=[common], help="funding/credit sensitivities")
    p_greeks.add_argument("--check-fd", action="store_true",
                          help="cross-check against central finite differences")
    p_greeks.add_argument("--bump", type=float, default=1e-6, help="absolute rate bump for --check-fd")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="price/sensitivity surface over two parameter axes")
    p_sweep.add_argument("--axis1", required=True, metavar="NAME=LO:HI:N")
    p_sweep.add_argument("--axis2", required=True, metavar="NAME=LO:HI:N")
    p_sweep.add_argument("--csv", default="sweep.csv", metavar="FILE",
                         help="surface CSV path (gnuplot matrix goes alongside as .gp)")
    p_sweep.add_argument("--plot", nargs="?", const="", default=None, metavar="FILE",
                         help="also render a PNG surface (default: CSV stem + .png)")

    p_hedge = sub.add_parser("hedge", parents=[common],
                             help="discrete replication experiment under a real-world measure")
    p_hedge.add_argument("--target", choices=("option", "bond"), default="option")
    p_hedge.add_argument("--mu", type=float, default=0.08, help="real-world drift (default 0.08)")
    p_hedge.add_argument("--lambda-p", type=float, default=None, dest="lambda_p",
                         help="real-world default intensity (default: pricing intensity)")
    p_hedge.add_argument("--steps", type=int, default=1000)
    p_hedge.add_argument("--paths", type=int, default=200,
                         help="paths for the error distribution (ignored in single-path mode)")
    p_hedge.add_argument("--seed", type=int, default=0)
    p_hedge.add_argument("--trajectory", metavar="FILE",
                         help="record a single path and write it as CSV")
    p_hedge.add_argument("--plot", nargs="?", const="", default=None, metavar="FILE",
                         help="render the single-path wealth/spot trajectory")

    p_cds = sub.add_parser("cds-spread", parents=[common],
                           help="fair CDS spread of the flat-intensity default clock")
    p_cds.add_argument("--method", choices=("auto", "closed", "quadrature"), default="auto")

    sub.add_parser("xcheck", parents=[common, grid_flags, mc_flags],
                   help="consistency gate: closed form vs alternate/PDE/MC routes")

    return parser


_HANDLERS = {
    "price": _cmd_price,
    "pde": _cmd_pde,
    "mc": _cmd_mc,
    "greeks": _cmd_greeks,
    "sweep": _cmd_sweep,
    "hedge": _cmd_hedge,
    "cds-spread": _cmd_cds_spread,
    "xcheck": _cmd_xcheck,
}


def run(argv=None) -> int:
    t0 = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        report, code = _HANDLERS[args.command](args)
        _emit(report, args)
    except ParamError as exc:
        print(f"vulnpricer: parameter error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergence, GridTooCoarse, InvalidConfig) as exc:
        print(f"vulnpricer: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"vulnpricer: numerical failure: {exc}", file=sys.stderr)
        return 3
    finally:
        print(f"elapsed_seconds={time.perf_counter() - t0:.3f}", file=sys.stderr)
    return code


def main() -> None:
    raise SystemExit(run())
