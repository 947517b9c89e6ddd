"""File-based figure rendering for sweep surfaces and hedge trajectories.

Uses the Agg backend unconditionally so rendering works headless; every
function writes a PNG and returns the path, nothing is shown interactively.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .greeks import SweepResult  # noqa: E402
from .hedging import HedgeRunReport  # noqa: E402

__all__ = ["render_sweep_surface", "render_hedge_run"]


def render_sweep_surface(result: SweepResult, path, field: str = "price") -> str:
    """Render one sweep field (price, d_f or d_h) as a 3-D surface."""
    grids = {"price": result.price, "d_f": result.d_f, "d_h": result.d_h}
    if field not in grids:
        raise ValueError(f"field must be one of {sorted(grids)}, got {field!r}")
    z = grids[field]
    a1, a2 = np.meshgrid(result.axis1_values, result.axis2_values, indexing="ij")
    fig = plt.figure(figsize=(7.5, 5.5))
    ax = fig.add_subplot(projection="3d")
    ax.plot_surface(a1, a2, z, cmap="viridis", linewidth=0.2, edgecolor="k", alpha=0.9)
    ax.set_xlabel(result.axis1_name)
    ax.set_ylabel(result.axis2_name)
    ax.set_zlabel(field)
    ax.set_title(f"{field} over ({result.axis1_name}, {result.axis2_name})")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def render_hedge_run(report: HedgeRunReport, path) -> str:
    """Plot tracked wealth against the replication target, plus the spot path."""
    fig, (ax_w, ax_s) = plt.subplots(
        2, 1, figsize=(7.5, 6.5), sharex=True, height_ratios=[2, 1]
    )
    ax_w.plot(report.times, report.wealth, lw=1.0, label="portfolio wealth")
    ax_w.plot(report.times, report.target, lw=1.0, ls="--", label="target value")
    if report.defaulted and report.default_time is not None:
        ax_w.axvline(report.default_time, color="r", lw=0.8, ls=":", label="default")
    ax_w.set_ylabel("value")
    ax_w.legend(loc="best", fontsize=8)
    ax_w.set_title(
        f"replication over {report.n_steps} steps, terminal error "
        f"{report.terminal_error:.3e}"
    )
    ax_s.plot(report.times, report.spot, lw=0.8, color="tab:gray")
    ax_s.set_xlabel("t")
    ax_s.set_ylabel("spot")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)
