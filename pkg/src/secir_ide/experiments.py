"""Experiment harness built on the solver and the reference model.

Three studies: empirical convergence order against a fine-step reference
solution (exponential stay times, so the reference model is exact), the
response of new transmissions to an abrupt contact change from a
stationary start, and a data-driven scenario run compared against series
extrapolated directly from the reporting table.  A synthetic-outbreak
generator closes the loop for round-trip testing of the data-driven
initialization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import date
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import (
    CompartmentState,
    ContactSchedule,
    FlowHistory,
    InfectionState,
    ParameterSet,
    SimulationResult,
    TimeGrid,
    TransitionId,
)
from .data_init import (
    ReportedData,
    build_initial_history,
    extrapolate_comparison_series,
    pre_history_window,
    synthesize_reported_data,
)
from .distributions import backwards_difference_kernel, support_steps
from .ode import (
    OdeParameterSet,
    OdeResult,
    derive_ode_parameters,
    ode_flows,
    reduce_ide_to_ode,
    rk_integrate,
)
from .solver import (
    DOWNSTREAM_ORDER,
    FLOW_SOURCE,
    _foi_weight_arrays,
    build_solver_state,
    compartments_from_history,
    simulate,
)

__all__ = [
    "QUANTITY_LABELS",
    "flow_label",
    "discrete_l2_error",
    "ConvergenceStudy",
    "convergence_study",
    "constant_flow_history",
    "stationary_level",
    "stationary_history",
    "step_jump_factor",
    "plateau_deviation",
    "ChangepointResult",
    "changepoint_experiment",
    "ScenarioResult",
    "scenario_run",
    "generate_synthetic_outbreak",
]


def flow_label(t: TransitionId) -> str:
    """Column/series label of a transition flow, e.g. sigma_SE."""
    return "sigma_" + t.name.replace("_", "")


#: The eighteen compared quantities: eight compartments, ten flows.
QUANTITY_LABELS: tuple[str, ...] = tuple(s.name for s in InfectionState) + tuple(
    flow_label(t) for t in TransitionId
)


def discrete_l2_error(approx: np.ndarray, reference: np.ndarray, dt: float) -> float:
    """Relative discrete L2 distance sqrt(dt*sum((u-v)^2))/sqrt(dt*sum(v^2))."""
    u = np.asarray(approx, dtype=float)
    v = np.asarray(reference, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    den = math.sqrt(dt * float(np.sum(v * v)))
    if den == 0.0:
        raise ValueError("reference series has zero norm")
    return math.sqrt(dt * float(np.sum((u - v) ** 2))) / den


@dataclass(frozen=True)
class ConvergenceStudy:
    """Relative errors per quantity and step size, and the fitted orders.

    ``runs`` keeps the flow-model run behind each step size (same order as
    ``dts``) so invariants can be checked on the very trajectories the
    errors were measured on.
    """

    dts: np.ndarray
    labels: tuple[str, ...]
    errors: Mapping[str, np.ndarray]
    slopes: Mapping[str, float]
    runs: tuple[SimulationResult, ...]


def convergence_study(
    params: ParameterSet,
    y0: np.ndarray,
    dts: Sequence[float],
    spin_days: float = 35.0,
    compare_days: float = 35.0,
    dt_reference: float = 1e-5,
    record_dt: float = 1e-3,
) -> ConvergenceStudy:
    """Empirical convergence of the flow scheme against the reduced model.

    The exponential-stay-time reference trajectory is integrated once on
    [0, spin+compare] with the fifth-order scheme at ``dt_reference`` and
    recorded on the ``record_dt`` grid.  For each step size the reference
    flows over the spin window seed the pre-history, the flow model then
    runs over the comparison window, and relative discrete L2 errors of
    all eighteen quantities are fitted to log(error) ~ slope*log(dt).
    """
    ode_p = reduce_ide_to_ode(params)
    rec_every = round(record_dt / dt_reference)
    if rec_every < 1 or abs(rec_every * dt_reference - record_dt) > 1e-12:
        raise ValueError("record_dt must be a positive multiple of dt_reference")
    t_total = spin_days + compare_days
    ref = rk_integrate(ode_p, y0, (0.0, t_total), dt_reference, record_every=rec_every)
    ref_flows = ode_flows(ode_p, ref.times, ref.compartments)
    i0 = round(spin_days / record_dt)

    dts_arr = np.asarray(sorted(dts, reverse=True), dtype=float)
    errors: dict[str, list[float]] = {lab: [] for lab in QUANTITY_LABELS}
    runs: list[SimulationResult] = []
    for dt in dts_arr:
        ratio = round(dt / record_dt)
        if ratio < 1 or abs(ratio * record_dt - dt) > 1e-12:
            raise ValueError(f"dt = {dt} is not a multiple of the record grid {record_dt}")
        n_pre = round(spin_days / dt)
        n_live = round(compare_days / dt)
        if abs(n_pre * dt - spin_days) > 1e-9 or abs(n_live * dt - compare_days) > 1e-9:
            raise ValueError(f"windows are not whole multiples of dt = {dt}")
        hist = {t: ref_flows[t][ratio : i0 + 1 : ratio] for t in TransitionId}
        state = build_solver_state(
            params, FlowHistory(TimeGrid(dt, -n_pre, 0), hist), ref.compartments[i0]
        )
        res = simulate(state, compare_days)
        runs.append(res)
        for s in InfectionState:
            errors[s.name].append(
                discrete_l2_error(res.compartments[:, s], ref.compartments[i0::ratio, s], dt)
            )
        for t in TransitionId:
            errors[flow_label(t)].append(
                discrete_l2_error(res.flow_series(t), ref_flows[t][i0::ratio], dt)
            )

    err_arrays = {lab: np.asarray(v) for lab, v in errors.items()}
    log_dts = np.log(dts_arr)
    slopes = {
        lab: float(np.polyfit(log_dts, np.log(e), 1)[0]) for lab, e in err_arrays.items()
    }
    return ConvergenceStudy(
        dts=dts_arr, labels=QUANTITY_LABELS, errors=err_arrays, slopes=slopes, runs=tuple(runs)
    )


def _constant_flow_levels(params: ParameterSet, dt: float, level: float) -> dict[TransitionId, float]:
    """Per-transition constants produced by the scheme under constant inflow.

    With truncated kernels a constant inflow c yields the constant outflow
    mu~ * c * (1 - gamma(q)); using exactly that value keeps the live run
    a seamless continuation of the constant past.
    """
    mus = params.mus
    flows = {TransitionId.S_E: float(level)}
    for t in DOWNSTREAM_ORDER:
        kappa = -dt * float(np.sum(backwards_difference_kernel(params.gamma[t], dt)))
        flows[t] = mus[t] * flows[FLOW_SOURCE[t]] * kappa
    return flows


def constant_flow_history(
    params: ParameterSet, dt: float, level: float, n_pre: int | None = None
) -> tuple[FlowHistory, CompartmentState]:
    """Pre-history of constant flows at a given new-transmission level.

    Deaths at time zero accumulate the constant terminal flow over the
    window (flows before it are zero by convention); the remaining
    compartments come from :func:`compartments_from_history`.
    """
    if not (level >= 0.0 and math.isfinite(level)):
        raise ValueError("flow level must be nonnegative and finite")
    if n_pre is None:
        n_pre = max(support_steps(d, dt) for d in params.gamma.values())
    levels = _constant_flow_levels(params, dt, level)
    hist = {t: np.full(n_pre, levels[t]) for t in TransitionId}
    deaths = dt * n_pre * levels[TransitionId.U_D]
    comp = compartments_from_history(params, hist, dt, deaths)
    return FlowHistory(TimeGrid(dt, -n_pre, 0), hist), CompartmentState(comp)


def stationary_level(params: ParameterSet, dt: float, n_pre: int | None = None) -> float:
    """New-transmission level at which the first live step reproduces itself.

    All compartments and the force-of-infection numerator scale linearly
    in the level c, so sigma_SE(t_1) = g(c) is a scalar map; its positive
    fixed point is bracketed and solved to machine precision (well under
    1e-12 relative, in far fewer than 100 evaluations).  Supercritical
    parameters are required for a positive level to exist.
    """
    if n_pre is None:
        n_pre = max(support_steps(d, dt) for d in params.gamma.values())
    unit = _constant_flow_levels(params, dt, 1.0)
    hist1 = {t: np.full(n_pre, unit[t]) for t in TransitionId}
    deaths1 = dt * n_pre * unit[TransitionId.U_D]
    comp1 = compartments_from_history(params, hist1, dt, deaths1)
    occupied1 = params.N - comp1[InfectionState.S]
    if occupied1 <= 0.0:
        raise ValueError("constant history occupies no one; cannot normalize")
    foi_c_rev, foi_i_rev = _foi_weight_arrays(params, dt)
    if n_pre < max(foi_c_rev.size, foi_i_rev.size):
        raise ValueError("pre-history shorter than the force-of-infection window")
    lam1 = dt * (
        float(np.sum(foi_c_rev)) * unit[TransitionId.E_C]
        + float(np.sum(foi_i_rev)) * unit[TransitionId.C_I]
    )
    phi0 = params.contact.rate_at(0.0)
    deaths_unit = comp1[InfectionState.D]
    N = params.N

    def excess(c: float) -> float:
        lam = phi0 * lam1 * c / (N - deaths_unit * c)
        s0 = N - occupied1 * c
        return s0 * lam / (1.0 + dt * lam) - c

    hi = (N / occupied1) * (1.0 - 1e-9)
    lo = hi * 1e-12
    if not excess(lo) > 0.0:
        raise ValueError("no positive stationary level: parameters are subcritical")
    if not excess(hi) < 0.0:
        raise ValueError("stationary level is not bracketed below the population limit")
    return float(brentq(excess, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=100))


def stationary_history(
    params: ParameterSet, dt: float, n_pre: int | None = None
) -> tuple[FlowHistory, CompartmentState, float]:
    """Constant pre-history at the self-reproducing new-transmission level."""
    level = stationary_level(params, dt, n_pre)
    hist, comp0 = constant_flow_history(params, dt, level, n_pre)
    return hist, comp0, level


def step_jump_factor(series: np.ndarray, lo: int, hi: int) -> tuple[float, int]:
    """Largest single-step ratio (by |log|) of a positive series on [lo, hi].

    Returns (series[k+1]/series[k], k) for the steepest step; used to read
    off the response of the new-transmission flow to a contact change.
    """
    series = np.asarray(series, dtype=float)
    lo = max(lo, 0)
    hi = min(hi, series.size - 2)
    if hi < lo:
        raise ValueError("empty search window")
    ratios = series[lo + 1 : hi + 2] / series[lo : hi + 1]
    k = int(np.argmax(np.abs(np.log(ratios))))
    return float(ratios[k]), lo + k


def plateau_deviation(series: np.ndarray, start: int, steps: int) -> float:
    """max |series/series[start] - 1| over the window [start, start+steps]."""
    series = np.asarray(series, dtype=float)
    base = series[start]
    if base == 0.0:
        raise ValueError("zero base value")
    window = series[start : start + steps + 1]
    return float(np.max(np.abs(window / base - 1.0)))


@dataclass(frozen=True)
class ChangepointResult:
    """Both models' response to one abrupt contact-rate change.

    ``ide_sigma``/``ode_sigma`` are the per-step new-transmission flows;
    jump factors are the steepest single-step ratios near the change, the
    plateau deviations the largest relative drift over the half day after
    the jump, and ``constancy`` the largest relative drift over the whole
    run relative to the stationary start (its value is only meaningful
    for factor = 1).
    """

    params: ParameterSet
    ode_params: OdeParameterSet
    level: float
    t_change: float
    factor: float
    ide: SimulationResult
    ode: OdeResult
    ide_sigma: np.ndarray
    ode_sigma: np.ndarray
    ide_jump: float
    ode_jump: float
    ide_plateau_dev: float
    ode_plateau_dev: float
    constancy: float


def changepoint_experiment(
    params: ParameterSet,
    dt: float,
    t_change: float,
    t_end: float,
    factor: float,
    n_pre: int | None = None,
) -> ChangepointResult:
    """Run both models from a stationary start through a contact change.

    ``params`` must carry a constant contact rate; at ``t_change`` it is
    multiplied by ``factor`` (factor 1 keeps it constant, providing the
    stationarity control).  The reduced model starts from its own
    continuous quasi-equilibrium at the same level so that both models
    emit the same pre-change new-transmission flow.
    """
    if len(params.contact.segments) != 1:
        raise ValueError("changepoint experiment needs a constant base contact rate")
    if not factor > 0.0:
        raise ValueError("contact factor must be positive")
    phi0 = params.contact.rate_at(0.0)
    hist, comp0, level = stationary_history(params, dt, n_pre)
    if factor != 1.0:
        sched = ContactSchedule(((0.0, phi0), (float(t_change), phi0 * factor)))
        params_run = replace(params, contact=sched)
    else:
        params_run = params
    state = build_solver_state(params_run, hist, comp0)
    ide = simulate(state, t_end)
    ide_sigma = ide.flow_series(TransitionId.S_E)

    ode_p = derive_ode_parameters(params_run)
    c = level
    e0 = c * ode_p.T_E
    c0 = c * ode_p.T_C
    i0 = params.mu_CI * c * ode_p.T_I
    h0 = params.mu_CI * params.mu_IH * c * ode_p.T_H
    u0 = params.mu_CI * params.mu_IH * params.mu_HU * c * ode_p.T_U
    d0 = comp0[InfectionState.D]
    s0 = c * (ode_p.N - d0) / (phi0 * ode_p.rho * (ode_p.xi_C * c0 + ode_p.xi_I * i0))
    r0 = ode_p.N - s0 - e0 - c0 - i0 - h0 - u0 - d0
    if r0 < 0.0:
        raise ValueError("quasi-equilibrium start does not fit inside the population")
    y0 = np.array([s0, e0, c0, i0, h0, u0, r0, d0])
    ode = rk_integrate(ode_p, y0, (0.0, t_end), dt)
    ode_sigma = ode_flows(ode_p, ode.times, ode.compartments)[TransitionId.S_E]

    idx_c = round(t_change / dt)
    half = round(0.5 / dt)
    if factor != 1.0:
        ide_jump, ide_at = step_jump_factor(ide_sigma, idx_c - 2, idx_c + 2)
        ode_jump, ode_at = step_jump_factor(ode_sigma, idx_c - 2, idx_c + 2)
        ide_dev = plateau_deviation(ide_sigma, ide_at + 1, half)
        ode_dev = plateau_deviation(ode_sigma, ode_at + 1, half)
    else:
        ide_jump = ode_jump = 1.0
        ide_dev = plateau_deviation(ide_sigma, 0, ide_sigma.size - 1)
        ode_dev = plateau_deviation(ode_sigma, 0, ode_sigma.size - 1)
    constancy = plateau_deviation(ide_sigma, 0, ide_sigma.size - 1)
    return ChangepointResult(
        params=params_run,
        ode_params=ode_p,
        level=level,
        t_change=float(t_change),
        factor=float(factor),
        ide=ide,
        ode=ode,
        ide_sigma=ide_sigma,
        ode_sigma=ode_sigma,
        ide_jump=ide_jump,
        ode_jump=ode_jump,
        ide_plateau_dev=ide_dev,
        ode_plateau_dev=ode_dev,
        constancy=constancy,
    )


@dataclass(frozen=True)
class ScenarioResult:
    """Data-driven run of both models plus the reporting-table series."""

    params: ParameterSet
    ode_params: OdeParameterSet
    t0_date: date
    history: FlowHistory
    compartments_at_0: CompartmentState
    ide: SimulationResult
    ode: OdeResult
    comparison: Mapping[str, np.ndarray]
    data: ReportedData


def scenario_run(
    data: ReportedData,
    params: ParameterSet,
    dt: float,
    t0_date: date,
    t_end: float,
    detection_ratio: float = 1.0,
) -> ScenarioResult:
    """Initialize from the reporting table and run both models for t_end days.

    The reduced model starts from the flow model's initial compartments;
    the comparison series extrapolate the reporting table itself over the
    simulated days.
    """
    hist, comp0 = build_initial_history(data, params, dt, t0_date, detection_ratio)
    state = build_solver_state(params, hist, comp0)
    ide = simulate(state, t_end)
    ode_p = derive_ode_parameters(params)
    ode = rk_integrate(ode_p, comp0.counts, (0.0, t_end), dt)
    n_days = int(math.floor(t_end + 1e-9))
    comparison = extrapolate_comparison_series(data, params, t0_date, n_days)
    return ScenarioResult(
        params=params,
        ode_params=ode_p,
        t0_date=t0_date,
        history=hist,
        compartments_at_0=comp0,
        ide=ide,
        ode=ode,
        comparison=comparison,
        data=data,
    )


def generate_synthetic_outbreak(
    params: ParameterSet,
    dt: float,
    level: float,
    t0_date: date,
    t_end_days: int,
    n_table_days: int,
) -> tuple[SimulationResult, ReportedData]:
    """Simulate an outbreak from a constant past and report it like a
    surveillance system would.

    The pre-history window is the data-initialization window (largest
    truncated support plus the confirmation backshift, whole days), so a
    table synthesized here always covers a later re-initialization.
    ``t0_date`` labels simulation day zero.
    """
    n_pre = pre_history_window(params, dt)
    hist, comp0 = constant_flow_history(params, dt, level, n_pre)
    state = build_solver_state(params, hist, comp0)
    result = simulate(state, float(t_end_days))
    table = synthesize_reported_data(result, params, t0_date, n_table_days)
    return result, table
