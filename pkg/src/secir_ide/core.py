"""Domain vocabulary shared by all modules.

Defines the eight infection states, the ten directed transitions between
them, the uniform time grid, contact schedules, infection-age-dependent
factors, the full parameter set and the containers used to exchange flow
histories and simulation results.  All types validate their invariants at
construction and are immutable afterwards.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .distributions import TransitionDistribution

__all__ = [
    "InfectionState",
    "TransitionId",
    "DISTRIBUTED_TRANSITIONS",
    "TimeGrid",
    "ContactSchedule",
    "AgeDependentFactor",
    "ParameterSet",
    "CompartmentState",
    "FlowHistory",
    "SimulationResult",
    "validate_parameters",
]


class InfectionState(enum.IntEnum):
    """The eight compartments, in fixed iteration order."""

    S = 0
    E = 1
    C = 2
    I = 3
    H = 4
    U = 5
    R = 6
    D = 7


class TransitionId(enum.IntEnum):
    """The ten directed transitions of the flow chart.

    Iteration order is the dependency order of the flow computation:
    the inflow of each transition is produced by an earlier member.
    """

    S_E = 0
    E_C = 1
    C_I = 2
    C_R = 3
    I_H = 4
    I_R = 5
    H_U = 6
    H_R = 7
    U_D = 8
    U_R = 9

    @property
    def source(self) -> InfectionState:
        return _TRANSITION_ENDPOINTS[self][0]

    @property
    def target(self) -> InfectionState:
        return _TRANSITION_ENDPOINTS[self][1]


_TRANSITION_ENDPOINTS: dict[TransitionId, tuple[InfectionState, InfectionState]] = {
    TransitionId.S_E: (InfectionState.S, InfectionState.E),
    TransitionId.E_C: (InfectionState.E, InfectionState.C),
    TransitionId.C_I: (InfectionState.C, InfectionState.I),
    TransitionId.C_R: (InfectionState.C, InfectionState.R),
    TransitionId.I_H: (InfectionState.I, InfectionState.H),
    TransitionId.I_R: (InfectionState.I, InfectionState.R),
    TransitionId.H_U: (InfectionState.H, InfectionState.U),
    TransitionId.H_R: (InfectionState.H, InfectionState.R),
    TransitionId.U_D: (InfectionState.U, InfectionState.D),
    TransitionId.U_R: (InfectionState.U, InfectionState.R),
}

#: The nine transitions governed by a stay-time distribution (all but S->E).
DISTRIBUTED_TRANSITIONS: tuple[TransitionId, ...] = tuple(
    t for t in TransitionId if t is not TransitionId.S_E
)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform mesh t_k = k*dt for k in [a, n_max].

    ``a`` is the (nonpositive) pre-history start index; flows at indices
    <= a are zero by assumption.  Times are always computed as k*dt, never
    by repeated addition, so the index->time map is exact.
    """

    dt: float
    a: int
    n_max: int

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if self.a > 0:
            raise ValueError("pre-history start index a must be <= 0")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    def time(self, k: int | np.ndarray) -> float | np.ndarray:
        return k * self.dt

    def times(self, start: int | None = None, stop: int | None = None) -> np.ndarray:
        """Grid times for indices start..stop (defaults: 0..n_max), inclusive."""
        lo = 0 if start is None else start
        hi = self.n_max if stop is None else stop
        return np.arange(lo, hi + 1) * self.dt

    def index_of(self, t: float) -> int:
        """Grid index of a grid-aligned time; raises if t is off-grid."""
        k = round(t / self.dt)
        if not math.isclose(k * self.dt, t, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(t))):
            raise ValueError(f"time {t} is not aligned to the grid with dt={self.dt}")
        return k


@dataclass(frozen=True)
class ContactSchedule:
    """Piecewise-constant daily contact rate phi(t).

    Segments are (start_time, rate) pairs sorted strictly by start time;
    evaluation returns the rate of the last segment with start <= t.
    Times before the first segment evaluate to the first rate.
    """

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("contact schedule needs at least one segment")
        starts = [s for s, _ in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("contact schedule segments must be sorted strictly by start time")
        for _, rate in self.segments:
            if not (rate >= 0.0 and math.isfinite(rate)):
                raise ValueError("negative contact rate")

    @classmethod
    def constant(cls, rate: float) -> "ContactSchedule":
        return cls(((0.0, float(rate)),))

    def rate_at(self, t: float) -> float:
        rate = self.segments[0][1]
        for start, r in self.segments:
            if start <= t:
                rate = r
            else:
                break
        return rate

    def change_times(self) -> tuple[float, ...]:
        return tuple(s for s, _ in self.segments[1:])

    def validate_grid_aligned(self, dt: float) -> None:
        """Change times must coincide with grid points."""
        for start in self.change_times():
            if abs(start / dt - round(start / dt)) > 1e-9:
                raise ValueError(
                    f"contact change time {start} does not lie on the grid with dt={dt}"
                )


@dataclass(frozen=True)
class AgeDependentFactor:
    """A proportion in [0,1] as a function of infection age tau.

    Either constant, or a tabulated curve with linear interpolation;
    evaluation for tau < 0 returns the value at tau = 0, and beyond the
    last node the curve is extended flat.
    """

    taus: tuple[float, ...] | None
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.taus is not None:
            if len(self.taus) != len(self.values) or len(self.taus) < 2:
                raise ValueError("tabulated factor needs matching tau/value nodes (>= 2)")
            if any(b <= a for a, b in zip(self.taus, self.taus[1:])):
                raise ValueError("tabulated factor taus must be strictly increasing")
        if not self.values:
            raise ValueError("factor needs at least one value")
        for v in self.values:
            if not (0.0 <= v <= 1.0):
                raise ValueError("factor value outside [0, 1]")

    @classmethod
    def constant(cls, value: float) -> "AgeDependentFactor":
        return cls(None, (float(value),))

    @classmethod
    def tabulated(cls, taus: Sequence[float], values: Sequence[float]) -> "AgeDependentFactor":
        return cls(tuple(float(t) for t in taus), tuple(float(v) for v in values))

    @property
    def is_constant(self) -> bool:
        return self.taus is None

    def at(self, tau: float | np.ndarray) -> float | np.ndarray:
        tau = np.maximum(tau, 0.0)
        if self.taus is None:
            return self.values[0] * np.ones_like(tau) if np.ndim(tau) else self.values[0]
        return np.interp(tau, self.taus, self.values)


@dataclass(frozen=True)
class ParameterSet:
    """All epidemiological constants and infection-age-dependent functions.

    ``gamma`` maps each distributed transition (every one except S->E) to
    its stay-time survival distribution.  Invariants are enforced at
    construction; see :func:`validate_parameters`.
    """

    N: float
    mu_CI: float
    mu_IH: float
    mu_HU: float
    mu_UD: float
    contact: ContactSchedule
    rho_C: AgeDependentFactor
    rho_I: AgeDependentFactor
    xi_C: AgeDependentFactor
    xi_I: AgeDependentFactor
    gamma: Mapping[TransitionId, TransitionDistribution]

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", dict(self.gamma))
        validate_parameters(self)

    @property
    def mus(self) -> dict[TransitionId, float]:
        """Branch weight of each distributed transition (mu or 1-mu)."""
        return {
            TransitionId.E_C: 1.0,
            TransitionId.C_I: self.mu_CI,
            TransitionId.C_R: 1.0 - self.mu_CI,
            TransitionId.I_H: self.mu_IH,
            TransitionId.I_R: 1.0 - self.mu_IH,
            TransitionId.H_U: self.mu_HU,
            TransitionId.H_R: 1.0 - self.mu_HU,
            TransitionId.U_D: self.mu_UD,
            TransitionId.U_R: 1.0 - self.mu_UD,
        }


def validate_parameters(p: ParameterSet) -> ParameterSet:
    """Return ``p`` unchanged iff all invariants hold, else raise ValueError.

    The error message names the first violated invariant.
    """
    if not (p.N > 0.0 and math.isfinite(p.N)):
        raise ValueError("N must be positive and finite")
    for name in ("mu_CI", "mu_IH", "mu_HU", "mu_UD"):
        v = getattr(p, name)
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} outside [0, 1]")
    if not (p.mu_CI * p.mu_IH * p.mu_HU * p.mu_UD < 1.0):
        raise ValueError("mu product not < 1")
    # ContactSchedule/AgeDependentFactor validate themselves at construction,
    # but re-check here so a handcrafted ParameterSet cannot slip through.
    for _, rate in p.contact.segments:
        if rate < 0.0:
            raise ValueError("negative contact rate")
    missing = [t.name for t in DISTRIBUTED_TRANSITIONS if t not in p.gamma]
    if missing:
        raise ValueError(f"missing stay-time distribution for {', '.join(missing)}")
    extra = [t.name for t in p.gamma if t not in DISTRIBUTED_TRANSITIONS]
    if extra:
        raise ValueError(f"distribution given for non-distributed transition {', '.join(extra)}")
    return p


@dataclass(frozen=True)
class CompartmentState:
    """The eight population counts at one grid point (real-valued)."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=float).copy()
        if arr.shape != (len(InfectionState),):
            raise ValueError("compartment state needs exactly eight entries")
        if not np.all(np.isfinite(arr)):
            raise ValueError("compartment counts must be finite")
        if np.any(arr < 0.0):
            raise ValueError("negative compartment count")
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @classmethod
    def from_mapping(cls, values: Mapping[InfectionState, float]) -> "CompartmentState":
        arr = np.zeros(len(InfectionState))
        for state, v in values.items():
            arr[state] = v
        return cls(arr)

    def __getitem__(self, state: InfectionState) -> float:
        return float(self.counts[state])

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class FlowHistory:
    """Dense per-transition flow rates on grid indices a+1 .. a+len.

    Entry j of each array is the flow at grid index ``a + 1 + j`` (time
    ``(a + 1 + j) * dt``).  All ten arrays share the same index range.
    """

    grid: TimeGrid
    flows: Mapping[TransitionId, np.ndarray]

    def __post_init__(self) -> None:
        flows = {}
        length = None
        for t in TransitionId:
            if t not in self.flows:
                raise ValueError(f"flow history missing transition {t.name}")
            arr = np.asarray(self.flows[t], dtype=float).copy()
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise ValueError("flow arrays must share one index range")
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0.0)):
                raise ValueError(f"flow history for {t.name} has negative or non-finite entries")
            arr.flags.writeable = False
            flows[t] = arr
        object.__setattr__(self, "flows", flows)

    @property
    def start_index(self) -> int:
        return self.grid.a + 1

    @property
    def length(self) -> int:
        return next(iter(self.flows.values())).size

    def __getitem__(self, t: TransitionId) -> np.ndarray:
        return self.flows[t]

    def at(self, t: TransitionId, k: int) -> float:
        """Flow of transition t at grid index k."""
        return float(self.flows[t][k - self.start_index])


@dataclass(frozen=True)
class SimulationResult:
    """Aligned time series of compartments, flows and force of infection.

    ``compartments`` has one row per grid index 0..n_max (column order is
    :class:`InfectionState`); ``flows`` covers a+1..n_max; the force of
    infection is recorded per index 0..n_max.  ``daily_new_transmissions``
    aggregates dt * sigma_SE over whole-day output intervals.
    """

    grid: TimeGrid
    compartments: np.ndarray
    flows: FlowHistory
    force_of_infection: np.ndarray
    daily_new_transmissions: np.ndarray
    max_mass_residual: float = 0.0
    max_sum_update_gap: float = 0.0

    def __post_init__(self) -> None:
        n = self.grid.n_max + 1
        comp = np.asarray(self.compartments, dtype=float)
        if comp.shape != (n, len(InfectionState)):
            raise ValueError("compartment array must have one row per grid index 0..n_max")
        foi = np.asarray(self.force_of_infection, dtype=float)
        if foi.shape != (n,):
            raise ValueError("force-of-infection array must cover indices 0..n_max")
        if foi.size and np.any(foi < 0.0):
            raise ValueError("negative force of infection")

    def series(self, state: InfectionState) -> np.ndarray:
        return self.compartments[:, state]

    def flow_series(self, t: TransitionId, start: int = 0) -> np.ndarray:
        """Flow values at grid indices start..n_max (default: simulation span)."""
        return self.flows[t][start - self.flows.start_index :]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()
