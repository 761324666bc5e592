"""ODE-SECIR reference model.

The flow model with exponential stay times and constant transmission
factors collapses to an eight-state ODE system; this module provides
that right-hand side, a fixed-step fifth-order Runge-Kutta integrator
(Dormand-Prince weights, no adaptivity), the parameter reductions in
both directions, and pointwise flow extraction used to seed the flow
model's pre-history and to compare trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import ContactSchedule, InfectionState, ParameterSet, TransitionId

__all__ = [
    "OdeParameterSet",
    "OdeResult",
    "ode_rhs",
    "rk_integrate",
    "reduce_ide_to_ode",
    "derive_ode_parameters",
    "weighted_ode_mean_stay_times",
    "ode_flows",
    "ode_force_of_infection",
]


@dataclass(frozen=True)
class OdeParameterSet:
    """Population, mean stay times, branch probabilities, contact model."""

    N: float
    T_E: float
    T_C: float
    T_I: float
    T_H: float
    T_U: float
    mu_CI: float
    mu_IH: float
    mu_HU: float
    mu_UD: float
    contact: ContactSchedule
    rho: float
    xi_C: float
    xi_I: float

    def __post_init__(self) -> None:
        if not (self.N > 0.0 and math.isfinite(self.N)):
            raise ValueError("N must be positive and finite")
        for name in ("T_E", "T_C", "T_I", "T_H", "T_U"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("mu_CI", "mu_IH", "mu_HU", "mu_UD", "rho", "xi_C", "xi_I"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} outside [0, 1]")
        if not (self.mu_CI * self.mu_IH * self.mu_HU * self.mu_UD < 1.0):
            raise ValueError("mu product not < 1")

    def contact_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        starts = np.array([s for s, _ in self.contact.segments], dtype=float)
        rates = np.array([r for _, r in self.contact.segments], dtype=float)
        return starts, rates


@dataclass(frozen=True)
class OdeResult:
    """Recorded states: row k is the solution at times[k]."""

    dt: float
    times: np.ndarray
    compartments: np.ndarray

    def series(self, state: InfectionState) -> np.ndarray:
        return self.compartments[:, state]


@njit(cache=True)
def _phi_at(t, starts, rates):
    r = rates[0]
    for i in range(starts.size):
        if starts[i] <= t:
            r = rates[i]
        else:
            break
    return r


@njit(cache=True)
def _rhs(y, t, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, out):
    phi = _phi_at(t, starts, rates)
    lam = phi * rho * (xiC * y[2] + xiI * y[3]) / (N - y[7])
    s_se = lam * y[0]
    out[0] = -s_se
    out[1] = s_se - y[1] / TE
    out[2] = y[1] / TE - y[2] / TC
    out[3] = mCI * y[2] / TC - y[3] / TI
    out[4] = mIH * y[3] / TI - y[4] / TH
    out[5] = mHU * y[4] / TH - y[5] / TU
    out[6] = (
        (1.0 - mCI) * y[2] / TC
        + (1.0 - mIH) * y[3] / TI
        + (1.0 - mHU) * y[4] / TH
        + (1.0 - mUD) * y[5] / TU
    )
    out[7] = mUD * y[5] / TU


# Dormand-Prince 5th-order tableau (6 stages, fixed step).
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0


@njit(cache=True)
def _rk5(y0, t0, dt, n_steps, record_every,
         N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates):
    n_rec = n_steps // record_every
    out = np.empty((n_rec + 1, 8))
    y = y0.copy()
    out[0] = y
    k1 = np.empty(8)
    k2 = np.empty(8)
    k3 = np.empty(8)
    k4 = np.empty(8)
    k5 = np.empty(8)
    k6 = np.empty(8)
    yt = np.empty(8)
    for step in range(n_steps):
        t = t0 + step * dt
        _rhs(y, t, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, k1)
        for j in range(8):
            yt[j] = y[j] + dt * _A21 * k1[j]
        _rhs(yt, t + _C2 * dt, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, k2)
        for j in range(8):
            yt[j] = y[j] + dt * (_A31 * k1[j] + _A32 * k2[j])
        _rhs(yt, t + _C3 * dt, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, k3)
        for j in range(8):
            yt[j] = y[j] + dt * (_A41 * k1[j] + _A42 * k2[j] + _A43 * k3[j])
        _rhs(yt, t + _C4 * dt, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, k4)
        for j in range(8):
            yt[j] = y[j] + dt * (_A51 * k1[j] + _A52 * k2[j] + _A53 * k3[j] + _A54 * k4[j])
        _rhs(yt, t + _C5 * dt, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, k5)
        for j in range(8):
            yt[j] = y[j] + dt * (
                _A61 * k1[j] + _A62 * k2[j] + _A63 * k3[j] + _A64 * k4[j] + _A65 * k5[j]
            )
        _rhs(yt, t + dt, N, TE, TC, TI, TH, TU, mCI, mIH, mHU, mUD, rho, xiC, xiI, starts, rates, k6)
        for j in range(8):
            y[j] = y[j] + dt * (
                _B1 * k1[j] + _B3 * k3[j] + _B4 * k4[j] + _B5 * k5[j] + _B6 * k6[j]
            )
        if (step + 1) % record_every == 0:
            out[(step + 1) // record_every] = y
    return out


def ode_rhs(y: np.ndarray, t: float, p: OdeParameterSet) -> np.ndarray:
    """Time derivative of (S, E, C, I, H, U, R, D); entries sum to zero."""
    y = np.asarray(y, dtype=float)
    if not y[InfectionState.D] < p.N:
        raise ValueError("deaths must stay below the total population")
    starts, rates = p.contact_arrays()
    out = np.empty(8)
    _rhs(y, t, p.N, p.T_E, p.T_C, p.T_I, p.T_H, p.T_U,
         p.mu_CI, p.mu_IH, p.mu_HU, p.mu_UD, p.rho, p.xi_C, p.xi_I, starts, rates, out)
    return out


def rk_integrate(
    p: OdeParameterSet,
    y0: np.ndarray,
    t_span: tuple[float, float],
    dt: float,
    record_every: int = 1,
) -> OdeResult:
    """Fixed-step fifth-order Runge-Kutta over t_span, dense output.

    Records every ``record_every``-th step (the step count must divide
    evenly), so the result grid has step dt * record_every.
    """
    t0, t1 = t_span
    n_steps = round((t1 - t0) / dt)
    if n_steps < 0 or abs(t0 + n_steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ValueError(f"dt = {dt} does not divide the span {t_span}")
    if record_every < 1 or n_steps % record_every:
        raise ValueError("record_every must be a positive divisor of the step count")
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (8,):
        raise ValueError("y0 needs exactly eight entries")
    if not y0[InfectionState.D] < p.N:
        raise ValueError("initial deaths must be below the total population")
    starts, rates = p.contact_arrays()
    states = _rk5(
        y0, t0, dt, n_steps, record_every,
        p.N, p.T_E, p.T_C, p.T_I, p.T_H, p.T_U,
        p.mu_CI, p.mu_IH, p.mu_HU, p.mu_UD, p.rho, p.xi_C, p.xi_I, starts, rates,
    )
    dt_rec = dt * record_every
    times = t0 + np.arange(states.shape[0]) * dt_rec
    return OdeResult(dt=dt_rec, times=times, compartments=states)


def _constant_value(factor, name: str) -> float:
    if not factor.is_constant:
        raise ValueError(f"non-constant {name}: the reduction needs a constant factor")
    return factor.values[0]


def weighted_ode_mean_stay_times(params: ParameterSet) -> dict[str, float]:
    """Mean stay time per compartment as the branch-probability-weighted average."""
    g = params.gamma
    mus = params.mus
    return {
        "T_E": g[TransitionId.E_C].mean_stay_time(),
        "T_C": mus[TransitionId.C_I] * g[TransitionId.C_I].mean_stay_time()
        + mus[TransitionId.C_R] * g[TransitionId.C_R].mean_stay_time(),
        "T_I": mus[TransitionId.I_H] * g[TransitionId.I_H].mean_stay_time()
        + mus[TransitionId.I_R] * g[TransitionId.I_R].mean_stay_time(),
        "T_H": mus[TransitionId.H_U] * g[TransitionId.H_U].mean_stay_time()
        + mus[TransitionId.H_R] * g[TransitionId.H_R].mean_stay_time(),
        "T_U": mus[TransitionId.U_D] * g[TransitionId.U_D].mean_stay_time()
        + mus[TransitionId.U_R] * g[TransitionId.U_R].mean_stay_time(),
    }


def _shared_rho(ide: ParameterSet) -> float:
    rho_c = _constant_value(ide.rho_C, "rho_C")
    rho_i = _constant_value(ide.rho_I, "rho_I")
    if not math.isclose(rho_c, rho_i, rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError("rho_C and rho_I must share one constant value")
    return rho_c


def reduce_ide_to_ode(ide: ParameterSet) -> OdeParameterSet:
    """Exact reduction: exponential stay times with per-compartment shared means.

    Requires every distribution to be exponential, both branches of each
    compartment to share one mean, and constant transmission factors.
    """
    pairs = {
        "T_C": (TransitionId.C_I, TransitionId.C_R),
        "T_I": (TransitionId.I_H, TransitionId.I_R),
        "T_H": (TransitionId.H_U, TransitionId.H_R),
        "T_U": (TransitionId.U_D, TransitionId.U_R),
    }
    for t, d in ide.gamma.items():
        if d.family != "exponential":
            raise ValueError(f"non-exponential family for {t.name}")
    means = {}
    means["T_E"] = ide.gamma[TransitionId.E_C].mean_stay_time()
    for name, (t1, t2) in pairs.items():
        m1 = ide.gamma[t1].mean_stay_time()
        m2 = ide.gamma[t2].mean_stay_time()
        if not math.isclose(m1, m2, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"pair mismatch: {t1.name} and {t2.name} means differ")
        means[name] = m1
    return OdeParameterSet(
        N=ide.N,
        **means,
        mu_CI=ide.mu_CI,
        mu_IH=ide.mu_IH,
        mu_HU=ide.mu_HU,
        mu_UD=ide.mu_UD,
        contact=ide.contact,
        rho=_shared_rho(ide),
        xi_C=_constant_value(ide.xi_C, "xi_C"),
        xi_I=_constant_value(ide.xi_I, "xi_I"),
    )


def derive_ode_parameters(ide: ParameterSet) -> OdeParameterSet:
    """Approximate reduction for arbitrary families via weighted mean stay times."""
    return OdeParameterSet(
        N=ide.N,
        **weighted_ode_mean_stay_times(ide),
        mu_CI=ide.mu_CI,
        mu_IH=ide.mu_IH,
        mu_HU=ide.mu_HU,
        mu_UD=ide.mu_UD,
        contact=ide.contact,
        rho=_shared_rho(ide),
        xi_C=_constant_value(ide.xi_C, "xi_C"),
        xi_I=_constant_value(ide.xi_I, "xi_I"),
    )


def ode_flows(
    p: OdeParameterSet, times: np.ndarray, states: np.ndarray
) -> dict[TransitionId, np.ndarray]:
    """Pointwise transition flows implied by the ODE states.

    sigma_S^E = S*phi*rho*(xi_C*C + xi_I*I)/(N - D); each downstream flow
    is the branch share of (compartment)/(mean stay time).
    """
    S, E, C, I = (states[:, s] for s in (InfectionState.S, InfectionState.E,
                                         InfectionState.C, InfectionState.I))
    H, U, D = (states[:, s] for s in (InfectionState.H, InfectionState.U, InfectionState.D))
    phi = np.array([p.contact.rate_at(t) for t in times])
    s_se = S * phi * p.rho * (p.xi_C * C + p.xi_I * I) / (p.N - D)
    return {
        TransitionId.S_E: s_se,
        TransitionId.E_C: E / p.T_E,
        TransitionId.C_I: p.mu_CI * C / p.T_C,
        TransitionId.C_R: (1.0 - p.mu_CI) * C / p.T_C,
        TransitionId.I_H: p.mu_IH * I / p.T_I,
        TransitionId.I_R: (1.0 - p.mu_IH) * I / p.T_I,
        TransitionId.H_U: p.mu_HU * H / p.T_H,
        TransitionId.H_R: (1.0 - p.mu_HU) * H / p.T_H,
        TransitionId.U_D: p.mu_UD * U / p.T_U,
        TransitionId.U_R: (1.0 - p.mu_UD) * U / p.T_U,
    }


def ode_force_of_infection(p: OdeParameterSet, times: np.ndarray, states: np.ndarray) -> np.ndarray:
    """lambda(t) = phi*rho*(xi_C*C + xi_I*I)/(N - D) along a trajectory."""
    phi = np.array([p.contact.rate_at(t) for t in times])
    return (
        phi
        * p.rho
        * (p.xi_C * states[:, InfectionState.C] + p.xi_I * states[:, InfectionState.I])
        / (p.N - states[:, InfectionState.D])
    )
