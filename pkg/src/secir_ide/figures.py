"""File-based matplotlib renderings of simulation and experiment results.

Everything here draws on the Agg backend and writes straight to disk, so
figures render identically with or without a display.  Each function takes
plain arrays (or the result dataclasses) and a target path; none of them
returns a live figure object.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .core import InfectionState, TransitionId
from .experiments import ChangepointResult, ConvergenceStudy, ScenarioResult, flow_label
from .ode import ode_flows

__all__ = [
    "daily_totals",
    "render_compartments",
    "render_flows",
    "render_convergence",
    "render_changepoint",
    "render_scenario",
]

_DPI = 150
# Fixed Software tag: the default embeds the matplotlib version, which would
# make output bytes depend on the installed version for no benefit.
_META = {"Software": "secir-ide"}


def daily_totals(flow: np.ndarray, dt: float) -> np.ndarray:
    """Aggregate a per-step flow (entry k = rate at time k*dt) to day totals.

    Day d collects dt * flow over grid indices d/dt+1 .. (d+1)/dt, the same
    convention the solver uses for its daily new-transmission output.
    """
    flow = np.asarray(flow, dtype=float)
    steps = round(1.0 / dt)
    if steps < 1 or not math.isclose(steps * dt, 1.0, rel_tol=1e-9):
        raise ValueError("dt must divide one day to aggregate daily totals")
    n_days = (flow.size - 1) // steps
    return dt * flow[1 : n_days * steps + 1].reshape(n_days, steps).sum(axis=1)


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_META)
    plt.close(fig)


def render_compartments(times: np.ndarray, compartments: np.ndarray, path: Path) -> None:
    """One panel per compartment over time (rows of ``compartments``)."""
    fig, axes = plt.subplots(2, 4, figsize=(14, 6), sharex=True)
    for state, ax in zip(InfectionState, axes.flat):
        ax.plot(times, compartments[:, state], lw=1.2)
        ax.set_title(state.name)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("time [days]")
    fig.suptitle("compartment sizes")
    fig.tight_layout()
    _save(fig, path)


def render_flows(times: np.ndarray, flows: Mapping[TransitionId, np.ndarray], path: Path) -> None:
    """One panel per transition flow over time."""
    fig, axes = plt.subplots(2, 5, figsize=(16, 6), sharex=True)
    for t, ax in zip(TransitionId, axes.flat):
        ax.plot(times, flows[t], lw=1.2)
        ax.set_title(flow_label(t))
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("time [days]")
    fig.suptitle("transition flows [1/day]")
    fig.tight_layout()
    _save(fig, path)


def render_convergence(study: ConvergenceStudy, path: Path) -> None:
    """Log-log relative errors per quantity with a slope-one guide."""
    fig, (ax_c, ax_f) = plt.subplots(1, 2, figsize=(12, 5), sharey=True)
    comp_labels = [s.name for s in InfectionState]
    for label in study.labels:
        ax = ax_c if label in comp_labels else ax_f
        ax.loglog(study.dts, study.errors[label], marker="o", ms=3, lw=1.0, label=label)
    anchor = max(study.errors[lab][0] for lab in study.labels)
    for ax, title in ((ax_c, "compartments"), (ax_f, "flows")):
        guide = anchor * study.dts / study.dts[0]
        ax.loglog(study.dts, guide, "k--", lw=1.0, label="order 1")
        ax.set_xlabel(r"$\Delta t$ [days]")
        ax.set_title(title)
        ax.grid(alpha=0.3, which="both")
        ax.legend(fontsize=7, ncols=2)
    ax_c.set_ylabel("relative discrete L2 error")
    fig.tight_layout()
    _save(fig, path)


def render_changepoint(result: ChangepointResult, path: Path) -> None:
    """New-transmission flows of both models around the contact change."""
    times = result.ide.times
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(times, result.ide_sigma, lw=1.4, label="flow model")
    ax.plot(times, result.ode_sigma, lw=1.4, ls="--", label="reduced model")
    ax.axvline(result.t_change, color="k", lw=0.8, alpha=0.5)
    ax.set_xlabel("time [days]")
    ax.set_ylabel("new transmissions [1/day]")
    ax.set_title(f"contact rate x {result.factor:g} at day {result.t_change:g}")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def render_scenario(result: ScenarioResult, path: Path) -> None:
    """Both models against the series extrapolated from the reporting table."""
    dt = result.ide.grid.dt
    times = result.ide.times
    comp = result.comparison
    fig, axes = plt.subplots(2, 2, figsize=(12, 8))

    ax = axes[0, 0]
    days_ide = 1.0 + np.arange(result.ide.daily_new_transmissions.size)
    ax.plot(days_ide, result.ide.daily_new_transmissions, lw=1.4, label="flow model")
    ode_sigma = ode_flows(result.ode_params, result.ode.times, result.ode.compartments)
    ode_daily = daily_totals(ode_sigma[TransitionId.S_E], dt)
    ax.plot(1.0 + np.arange(ode_daily.size), ode_daily, lw=1.4, ls="--", label="reduced model")
    ax.plot(comp["day"], comp["daily_new_transmissions"], "k.", ms=5, label="extrapolated data")
    ax.set_title("daily new transmissions")
    ax.set_xlabel("day")

    ax = axes[0, 1]
    ax.plot(times, result.ide.series(InfectionState.I), lw=1.4, label="flow model")
    ax.plot(times, result.ode.series(InfectionState.I), lw=1.4, ls="--", label="reduced model")
    ax.plot(comp["day"], comp["infectious"], "k.", ms=5, label="extrapolated data")
    ax.set_title("infectious (symptomatic)")
    ax.set_xlabel("day")

    ax = axes[1, 0]
    ax.plot(times, result.ide.series(InfectionState.D), lw=1.4, label="flow model")
    ax.plot(times, result.ode.series(InfectionState.D), lw=1.4, ls="--", label="reduced model")
    ax.plot(comp["day"], comp["deaths"], "k.", ms=5, label="reported (shifted)")
    ax.set_title("cumulative deaths")
    ax.set_xlabel("day")

    ax = axes[1, 1]
    ax.plot(times, result.ide.series(InfectionState.U), lw=1.4, label="flow model")
    ax.plot(times, result.ode.series(InfectionState.U), lw=1.4, ls="--", label="reduced model")
    data = result.data
    if data.icu_dates is not None:
        offs = np.array([(d - result.t0_date).days for d in data.icu_dates], dtype=float)
        live = (offs >= 0.0) & (offs <= times[-1])
        ax.plot(offs[live], data.icu_occupancy[live], "k.", ms=5, label="reported")
    ax.set_title("intensive care occupancy")
    ax.set_xlabel("day")

    for ax in axes.flat:
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
