"""Initialization of the solver pre-history from reported case data.

Reported cumulative confirmations are turned into a dense confirmation
flow (daily differences, interpolated to the step size while conserving
daily totals), then shifted backwards by mean delays to recover the
transmission and symptom-onset flows that caused them.  The remaining
downstream flows follow from the discrete transition rule, and the
compartments at the start time come from the same truncated-window
occupancy sums the solver uses, so a run started from this history is
numerically consistent from its first step.

The reverse direction lives here too: synthesizing a reported-data table
from a finished simulation (for round-trip testing) and extrapolating
reported series forward for comparison plots.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.signal import fftconvolve

from .core import (
    CompartmentState,
    FlowHistory,
    InfectionState,
    ParameterSet,
    SimulationResult,
    TimeGrid,
    TransitionId,
)
from .distributions import backwards_difference_kernel, support_steps
from .solver import FLOW_SOURCE, compartments_from_history

__all__ = [
    "ReportedData",
    "load_case_data",
    "save_case_data",
    "daily_flow_from_cumulative",
    "interpolate_subdaily",
    "round_to_grid_steps",
    "backshift_steps",
    "backshift_flows",
    "pre_history_window",
    "mean_death_delay",
    "build_initial_history",
    "extrapolate_comparison_series",
    "synthesize_reported_data",
]

_CASE_HEADER = ("date", "cumulative_confirmed", "cumulative_deaths")
_ICU_HEADER = ("date", "icu_occupancy")

#: Downstream flows reconstructed by convolution during initialization
#: (confirmations are data, E->C and S->E come from the backshift).
_RECONSTRUCTED = (
    TransitionId.C_R,
    TransitionId.I_H,
    TransitionId.I_R,
    TransitionId.H_U,
    TransitionId.H_R,
    TransitionId.U_D,
    TransitionId.U_R,
)


def _as_readonly(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).copy()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < 0.0):
        raise ValueError(f"{name} contains negative values")
    arr.flags.writeable = False
    return arr


def _check_contiguous(dates: tuple[date, ...], name: str) -> None:
    for u, v in zip(dates, dates[1:]):
        if (v - u).days != 1:
            raise ValueError(f"{name} dates must be contiguous daily (gap at {u} -> {v})")


@dataclass(frozen=True)
class ReportedData:
    """Daily reporting table: cumulative confirmations and deaths, plus an
    optional ICU census on its own (also contiguous) date range."""

    dates: tuple[date, ...]
    cumulative_confirmed: np.ndarray
    cumulative_deaths: np.ndarray
    icu_dates: tuple[date, ...] | None = None
    icu_occupancy: np.ndarray | None = None

    def __post_init__(self) -> None:
        dates = tuple(self.dates)
        if not dates:
            raise ValueError("reported data needs at least one row")
        _check_contiguous(dates, "case data")
        conf = _as_readonly(self.cumulative_confirmed, "cumulative_confirmed")
        dths = _as_readonly(self.cumulative_deaths, "cumulative_deaths")
        if conf.size != len(dates) or dths.size != len(dates):
            raise ValueError("case columns must have one value per date")
        if np.any(np.diff(conf) < 0.0):
            raise ValueError("cumulative_confirmed must be nondecreasing")
        if np.any(np.diff(dths) < 0.0):
            raise ValueError("cumulative_deaths must be nondecreasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "cumulative_confirmed", conf)
        object.__setattr__(self, "cumulative_deaths", dths)
        if (self.icu_dates is None) != (self.icu_occupancy is None):
            raise ValueError("icu dates and occupancy must be given together")
        if self.icu_dates is not None:
            idates = tuple(self.icu_dates)
            _check_contiguous(idates, "icu data")
            icu = _as_readonly(self.icu_occupancy, "icu_occupancy")
            if icu.size != len(idates):
                raise ValueError("icu column must have one value per date")
            object.__setattr__(self, "icu_dates", idates)
            object.__setattr__(self, "icu_occupancy", icu)

    def index_of_date(self, day: date) -> int:
        offset = (day - self.dates[0]).days
        if offset < 0 or offset >= len(self.dates):
            raise ValueError(f"date {day.isoformat()} not present in the case data")
        return offset

    def day_offsets(self, origin: date) -> np.ndarray:
        """Signed day offsets of every row relative to ``origin``."""
        first = (self.dates[0] - origin).days
        return np.arange(first, first + len(self.dates), dtype=float)


def _read_rows(path, header: tuple[str, ...]) -> list[list[str]]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    with open(p, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or tuple(h.strip() for h in rows[0]) != header:
        raise ValueError(f"expected header {','.join(header)!r} in {p}")
    return rows[1:]


def _parse_rows(rows: list[list[str]], n_cols: int, path) -> tuple[list[date], list[list[float]]]:
    dates: list[date] = []
    cols: list[list[float]] = [[] for _ in range(n_cols - 1)]
    for row in rows:
        if len(row) != n_cols:
            raise ValueError(f"malformed row {row!r} in {path}")
        dates.append(date.fromisoformat(row[0].strip()))
        for j in range(1, n_cols):
            cols[j - 1].append(float(row[j]))
    return dates, cols


def load_case_data(cases_path, icu_path=None) -> ReportedData:
    """Read the daily reporting table (and optionally an ICU census table)."""
    dates, (conf, dths) = _parse_rows(_read_rows(cases_path, _CASE_HEADER), 3, cases_path)
    icu_dates = icu_vals = None
    if icu_path is not None:
        icu_dates, (icu_vals,) = _parse_rows(_read_rows(icu_path, _ICU_HEADER), 2, icu_path)
        icu_dates = tuple(icu_dates)
    return ReportedData(tuple(dates), conf, dths, icu_dates, icu_vals)


def save_case_data(data: ReportedData, cases_path, icu_path=None) -> None:
    """Write the reporting table; values keep full float precision."""
    with open(cases_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CASE_HEADER)
        for day, c, d in zip(data.dates, data.cumulative_confirmed, data.cumulative_deaths):
            w.writerow([day.isoformat(), format(c, ".17g"), format(d, ".17g")])
    if icu_path is not None:
        if data.icu_dates is None:
            raise ValueError("no icu series to save")
        with open(icu_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_ICU_HEADER)
            for day, u in zip(data.icu_dates, data.icu_occupancy):
                w.writerow([day.isoformat(), format(u, ".17g")])


def daily_flow_from_cumulative(cumulative) -> np.ndarray:
    """Per-day counts from a cumulative series; entry m covers day m+1."""
    cum = np.asarray(cumulative, dtype=float)
    d = np.diff(cum)
    bad = np.nonzero(d < 0.0)[0]
    if bad.size:
        raise ValueError(f"cumulative series decreases between rows {bad[0]} and {bad[0] + 1}")
    return d


def _steps_per_day(dt: float) -> int:
    spd = round(1.0 / dt)
    if spd < 1 or abs(spd * dt - 1.0) > 1e-9:
        raise ValueError(f"dt = {dt} must divide one day for daily-data handling")
    return spd


def interpolate_subdaily(daily, dt: float) -> np.ndarray:
    """Distribute daily counts over sub-daily steps of size dt.

    Values are linear between the day-end counts (constant before the
    first day end), then rescaled per day so each day's steps sum back to
    the original count exactly; days with zero count stay identically
    zero.  Entry j-1 of the result covers ((j-1)*dt, j*dt] measured from
    the start of day one.
    """
    daily = np.asarray(daily, dtype=float)
    if np.any(daily < 0.0):
        raise ValueError("daily counts must be nonnegative")
    spd = _steps_per_day(dt)
    if spd == 1:
        return daily.copy()
    m = daily.size
    if m == 0:
        return np.zeros(0)
    t_sub = np.arange(1, m * spd + 1) * dt
    vals = np.interp(t_sub, np.arange(1, m + 1), daily).reshape(m, spd)
    sums = vals.sum(axis=1)
    scale = np.divide(daily, sums, out=np.zeros_like(daily), where=sums > 0.0)
    return (vals * scale[:, None]).reshape(-1)


def round_to_grid_steps(duration: float, dt: float) -> int:
    """Nearest whole number of steps to duration/dt, half rounded up."""
    return math.floor(duration / dt + 0.5)


def backshift_steps(params: ParameterSet, dt: float) -> tuple[int, int]:
    """Grid shifts (confirmation->symptom onset, confirmation->transmission)."""
    t_ci = params.gamma[TransitionId.C_I].mean_stay_time()
    t_ec = params.gamma[TransitionId.E_C].mean_stay_time()
    return round_to_grid_steps(t_ci, dt), round_to_grid_steps(t_ec + t_ci, dt)


def backshift_flows(
    sigma_ci: np.ndarray, params: ParameterSet, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Symptom-onset and transmission flows implied by a confirmation flow.

    sigma_EC(t) = sigma_CI(t + s1*dt)/mu_CI and sigma_SE(t) =
    sigma_CI(t + s12*dt)/mu_CI with the mean-delay shifts of
    :func:`backshift_steps`; the outputs keep the input's start index and
    are shorter by the respective shift.
    """
    if not params.mu_CI > 0.0:
        raise ValueError("mu_CI must be positive to invert confirmed-case data")
    sigma_ci = np.asarray(sigma_ci, dtype=float)
    s1, s12 = backshift_steps(params, dt)
    return sigma_ci[s1:] / params.mu_CI, sigma_ci[s12:] / params.mu_CI


def pre_history_window(params: ParameterSet, dt: float) -> int:
    """Pre-history length in steps: largest truncated support plus the
    largest backshift, rounded up to whole days (so daily reported data
    can always cover it exactly)."""
    spd = _steps_per_day(dt)
    k_max = max(support_steps(d, dt) for d in params.gamma.values())
    _, s12 = backshift_steps(params, dt)
    days = max(1, math.ceil((k_max + s12) * dt - 1e-9))
    return days * spd


def mean_death_delay(params: ParameterSet) -> float:
    """Mean time from symptom onset to death along I -> H -> U -> D."""
    return sum(
        params.gamma[t].mean_stay_time()
        for t in (TransitionId.I_H, TransitionId.H_U, TransitionId.U_D)
    )


def _clamp_fft_noise(arr: np.ndarray) -> None:
    floor = -1e-12 * max(float(arr.max(initial=0.0)), 1.0)
    if np.any(arr < floor):
        raise ValueError("reconstructed flow is materially negative; inconsistent case data")
    np.maximum(arr, 0.0, out=arr)


def build_initial_history(
    data: ReportedData,
    params: ParameterSet,
    dt: float,
    t0_date: date,
    detection_ratio: float = 1.0,
) -> tuple[FlowHistory, CompartmentState]:
    """Pre-history flows and start compartments from reported case data.

    ``detection_ratio`` is the assumed fraction of symptom onsets that are
    eventually confirmed; reported counts are divided by it (default 1:
    no underdetection).  Confirmations before the table start are taken
    as zero, which is only accepted when the table starts at zero
    cumulative count; missing coverage elsewhere is an error.
    """
    if not (detection_ratio > 0.0 and math.isfinite(detection_ratio)):
        raise ValueError("detection ratio must be positive")
    spd = _steps_per_day(dt)
    s1, s12 = backshift_steps(params, dt)
    n_pre = pre_history_window(params, dt)
    a = -n_pre
    idx0 = data.index_of_date(t0_date)

    daily = daily_flow_from_cumulative(data.cumulative_confirmed) / detection_ratio
    subs = interpolate_subdaily(daily, dt)
    # Confirmation flow is needed at grid indices a+1 .. s12 relative to
    # t0; sub-step j of the table covers ((j-1)*dt, j*dt] from its first
    # date, so index k maps to j = idx0*spd + k.
    lo = idx0 * spd + a + 1
    hi = idx0 * spd + s12
    if hi > subs.size:
        raise ValueError(
            f"case data ends {math.ceil(s12 * dt)} day(s) too early after {t0_date.isoformat()}"
            " to cover the mean-delay shifts"
        )
    if lo < 1:
        if data.cumulative_confirmed[0] != 0.0:
            raise ValueError(
                "case data starts too late to cover the history window"
                " (and does not start at zero cumulative count)"
            )
        seg = np.concatenate([np.zeros(1 - lo), subs[:hi]])
    else:
        seg = subs[lo - 1 : hi].copy()

    ec_counts, se_counts = backshift_flows(seg, params, dt)
    hist: dict[TransitionId, np.ndarray] = {
        TransitionId.S_E: se_counts[:n_pre] / dt,
        TransitionId.E_C: ec_counts[:n_pre] / dt,
        TransitionId.C_I: seg[:n_pre] / dt,
    }
    mus = params.mus
    for t in _RECONSTRUCTED:
        neg_kernel = -backwards_difference_kernel(params.gamma[t], dt)[:-1]
        arr = mus[t] * dt * fftconvolve(hist[FLOW_SOURCE[t]], neg_kernel)[:n_pre]
        _clamp_fft_noise(arr)
        hist[t] = arr

    delay = mean_death_delay(params)
    offs = data.day_offsets(t0_date)
    if -delay < offs[0]:
        raise ValueError(
            f"death data starts too late: need {delay:.1f} day(s) before {t0_date.isoformat()}"
        )
    deaths_at_0 = float(np.interp(-delay, offs, data.cumulative_deaths))
    comp = compartments_from_history(params, hist, dt, deaths_at_0)

    grid = TimeGrid(dt, a, 0)
    return FlowHistory(grid, hist), CompartmentState(comp)


def extrapolate_comparison_series(
    data: ReportedData,
    params: ParameterSet,
    t0_date: date,
    n_days: int,
) -> dict[str, np.ndarray]:
    """Daily comparison series implied by the reporting table on days 0..n_days.

    Shifts use the exact mean delays (no grid rounding) with linear
    interpolation of the cumulative series between day ends:

    * daily new transmissions: forward-shifted confirmation increments,
      scaled by 1/mu_CI;
    * infectious count: confirmation increments still within the mean
      symptomatic stay, split by the hospitalization probability;
    * deaths: the cumulative deaths, back-shifted by the mean
      onset-to-death delay.
    """
    if not params.mu_CI > 0.0:
        raise ValueError("mu_CI must be positive to invert confirmed-case data")
    offs = data.day_offsets(t0_date)
    t_ec = params.gamma[TransitionId.E_C].mean_stay_time()
    t_ci = params.gamma[TransitionId.C_I].mean_stay_time()
    t_ih = params.gamma[TransitionId.I_H].mean_stay_time()
    t_ir = params.gamma[TransitionId.I_R].mean_stay_time()
    delay = mean_death_delay(params)
    t = np.arange(n_days + 1, dtype=float)

    hi_needed = n_days + t_ec + t_ci
    lo_needed = min(-t_ih, -t_ir, -delay)
    if lo_needed < offs[0] or hi_needed > offs[-1]:
        raise ValueError(
            f"case data must cover day offsets [{lo_needed:.1f}, {hi_needed:.1f}] around "
            f"{t0_date.isoformat()}"
        )

    def sigma(x: np.ndarray) -> np.ndarray:
        return np.interp(x, offs, data.cumulative_confirmed)

    new_transmissions = (sigma(t + t_ec + t_ci) - sigma(t + t_ec + t_ci - 1.0)) / params.mu_CI
    infectious = params.mu_IH * (sigma(t) - sigma(t - t_ih)) + (1.0 - params.mu_IH) * (
        sigma(t) - sigma(t - t_ir)
    )
    deaths = np.interp(t - delay, offs, data.cumulative_deaths)
    return {
        "day": t,
        "daily_new_transmissions": new_transmissions,
        "infectious": infectious,
        "deaths": deaths,
    }


def synthesize_reported_data(
    result: SimulationResult,
    params: ParameterSet,
    t0_date: date,
    n_days: int,
) -> ReportedData:
    """Reporting table a surveillance system would have produced for a run.

    Cumulative confirmations at each day end accumulate the symptom-onset
    flow from the very start of the pre-history (assumed zero before it);
    rows start at the first whole day of the pre-history.  Cumulative
    deaths are dated forward by the mean onset-to-death delay, i.e. the
    value listed for day s is the simulated death count at s + delay, so
    the table must extend ``delay`` days beyond ``n_days``; the ICU census
    is listed for the simulated days 0..n_days directly.
    """
    dt = result.grid.dt
    spd = _steps_per_day(dt)
    a = result.grid.a
    n_pre = -a
    if n_pre % spd != 0:
        raise ValueError("pre-history must cover whole days")
    pre_days = n_pre // spd
    live_days = result.grid.n_max // spd
    if n_days > live_days:
        raise ValueError(f"run covers only {live_days} whole day(s), need {n_days}")

    delay = mean_death_delay(params)
    if n_days + delay > result.grid.n_max * dt + 1e-9:
        raise ValueError(
            f"run must extend {delay:.1f} day(s) beyond day {n_days} to date deaths forward"
        )

    # Cumulative confirmations at day ends -pre_days .. n_days.
    csum_ci = dt * np.cumsum(result.flows[TransitionId.C_I])
    day_idx = np.arange(-pre_days + 1, n_days + 1) * spd - a - 1
    confirmed = np.concatenate([[0.0], csum_ci[day_idx]])

    # Simulated cumulative deaths on the full grid a .. n_max, anchored at
    # the day-0 value; constant-rate pre-history flows keep this exact.
    csum_ud = dt * np.cumsum(result.flows[TransitionId.U_D])
    d0 = result.compartments[0, InfectionState.D]
    deaths_grid = d0 - csum_ud[n_pre - 1] + np.concatenate([[0.0], csum_ud])
    times_grid = np.arange(a, result.grid.n_max + 1) * dt
    days = np.arange(-pre_days, n_days + 1, dtype=float)
    deaths = np.interp(days + delay, times_grid, deaths_grid)
    np.maximum(deaths, 0.0, out=deaths)

    dates = tuple(t0_date + timedelta(days=int(d)) for d in range(-pre_days, n_days + 1))
    icu_dates = tuple(t0_date + timedelta(days=d) for d in range(n_days + 1))
    icu = result.compartments[:: spd, InfectionState.U][: n_days + 1].copy()
    np.maximum(icu, 0.0, out=icu)
    return ReportedData(dates, confirmed, deaths, icu_dates, icu)
