"""Nonstandard discretization scheme for the flow-based SECIR model.

Per step the cycle is: force of infection (left endpoint) -> susceptible
update S/(1 + dt*lambda) -> the nine downstream flow convolutions in
dependency order (right-endpoint evaluation against the backwards-
difference kernels) -> compartment bookkeeping.  Compartments are
advanced incrementally by default ("update" path); the convolution-sum
path ("sum") is retained for the equivalence cross-check and for
computing initial compartments from a pre-history.

All convolution windows are truncated to the kernel supports, so a step
costs O(q/dt) per transition instead of O(n).  For the sum path the
survival weights are frozen at their support-end value beyond the
truncation cutoff; this keeps the two compartment paths algebraically
identical (their difference telescopes to the truncated-kernel update
rule) while the older-than-window contribution is picked up in O(1)
from running prefix sums of the inflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    CompartmentState,
    FlowHistory,
    InfectionState,
    ParameterSet,
    SimulationResult,
    TimeGrid,
    TransitionId,
)
from .distributions import (
    TransitionDistribution,
    backwards_difference_kernel,
    survival_on_grid,
)

__all__ = [
    "FLOW_SOURCE",
    "DOWNSTREAM_ORDER",
    "IdeSolverState",
    "build_solver_state",
    "force_of_infection",
    "step_susceptible",
    "transition_flow",
    "occupancy_sum",
    "compartments_update_discretization",
    "occupancy_weights",
    "compartments_from_history",
    "simulate",
]

#: Transition whose flow feeds each downstream transition's convolution.
FLOW_SOURCE: dict[TransitionId, TransitionId] = {
    TransitionId.E_C: TransitionId.S_E,
    TransitionId.C_I: TransitionId.E_C,
    TransitionId.C_R: TransitionId.E_C,
    TransitionId.I_H: TransitionId.C_I,
    TransitionId.I_R: TransitionId.C_I,
    TransitionId.H_U: TransitionId.I_H,
    TransitionId.H_R: TransitionId.I_H,
    TransitionId.U_D: TransitionId.H_U,
    TransitionId.U_R: TransitionId.H_U,
}

#: Evaluation order of the downstream flows: every inflow is produced first.
DOWNSTREAM_ORDER: tuple[TransitionId, ...] = tuple(
    t for t in TransitionId if t is not TransitionId.S_E
)

#: Inflow transition and outgoing branches of each transient compartment.
_COMPARTMENT_FLOWS: dict[InfectionState, tuple[TransitionId, tuple[TransitionId, ...]]] = {
    InfectionState.E: (TransitionId.S_E, (TransitionId.E_C,)),
    InfectionState.C: (TransitionId.E_C, (TransitionId.C_I, TransitionId.C_R)),
    InfectionState.I: (TransitionId.C_I, (TransitionId.I_H, TransitionId.I_R)),
    InfectionState.H: (TransitionId.I_H, (TransitionId.H_U, TransitionId.H_R)),
    InfectionState.U: (TransitionId.H_U, (TransitionId.U_D, TransitionId.U_R)),
}

_TERMINAL_R = (TransitionId.C_R, TransitionId.I_R, TransitionId.H_R, TransitionId.U_R)

# Net flow wiring, one row per compartment, one column per TransitionId.
_UPDATE_MATRIX = np.array(
    [
        [-1, 0, 0, 0, 0, 0, 0, 0, 0, 0],  # S
        [1, -1, 0, 0, 0, 0, 0, 0, 0, 0],  # E
        [0, 1, -1, -1, 0, 0, 0, 0, 0, 0],  # C
        [0, 0, 1, 0, -1, -1, 0, 0, 0, 0],  # I
        [0, 0, 0, 0, 1, 0, -1, -1, 0, 0],  # H
        [0, 0, 0, 0, 0, 0, 1, 0, -1, -1],  # U
        [0, 0, 0, 1, 0, 1, 0, 1, 0, 1],  # R
        [0, 0, 0, 0, 0, 0, 0, 0, 1, 0],  # D
    ],
    dtype=float,
)

#: Relative tolerance for "initial compartments sum to N".
_INIT_MASS_TOL = 1e-9


def step_susceptible(s_n: float, lambda_n: float, dt: float) -> tuple[float, float]:
    """One susceptible step: S_{n+1} = S_n/(1 + dt*lambda_n).

    Returns (S_{n+1}, sigma_SE at t_{n+1}) where the new-transmission flow
    is S_{n+1}*lambda_n, identically (S_n - S_{n+1})/dt.  Requires
    s_n >= 0 and lambda_n >= 0; then S is nonincreasing and both outputs
    are nonnegative at any step size.
    """
    s_next = s_n / (1.0 + dt * lambda_n)
    return s_next, s_next * lambda_n


def _window_dot(weights_rev: np.ndarray, buf: np.ndarray, pos: int) -> float:
    """sum_{j=1..W} w[j] * buf[pos + 1 - j], W = min(len(w), pos + 1).

    ``weights_rev`` holds w indexed by lag 1..K in *reversed* order so the
    window pairs with an ascending, contiguous slice of the flow buffer.
    """
    k = weights_rev.size
    w = k if k <= pos + 1 else pos + 1
    return float(np.dot(weights_rev[k - w :], buf[pos + 1 - w : pos + 1]))


def _neg_kernel_rev(d: TransitionDistribution, dt: float) -> np.ndarray:
    """-gamma' at lags 1..K, reversed for the window dot product."""
    kern = backwards_difference_kernel(d, dt)
    out = np.ascontiguousarray(-kern[:-1][::-1])
    out.flags.writeable = False
    return out


def transition_flow(
    d: TransitionDistribution, mu_tilde: float, inflow: Sequence[float], dt: float
) -> float:
    """Single flow value -mu~ * dt * sum_i gamma'(t_{n+1-i}) * sigma_in(t_{i+1}).

    ``inflow`` lists the inflow history in ascending time order ending at
    the step being computed (the last entry is the current-step inflow).
    """
    buf = np.asarray(inflow, dtype=float)
    rev = _neg_kernel_rev(d, dt)
    return mu_tilde * dt * _window_dot(rev, buf, buf.size - 1)


def _branch_weights(
    branches: Sequence[tuple[TransitionDistribution, float]], dt: float
) -> tuple[np.ndarray, float]:
    """Combined survival weights mu1*gamma1 + mu2*gamma2 at lags 1..K.

    K is the larger branch support; the shorter branch's survival is
    frozen at its support-end value so the weights' backwards differences
    coincide exactly with the truncated kernels.  Returns the reversed
    weight array and the frozen plateau value (the weight at every lag
    beyond K).
    """
    survs = [survival_on_grid(d, dt) for d, _ in branches]
    k = max(s.size - 1 for s in survs)
    w = np.zeros(k + 1)
    for (_, mu), s in zip(branches, survs):
        padded = np.concatenate([s, np.full(k + 1 - s.size, s[-1])])
        w += mu * padded
    w_rev = np.ascontiguousarray(w[1:][::-1])
    w_rev.flags.writeable = False
    return w_rev, float(w[-1])


def occupancy_sum(
    branches: Sequence[tuple[TransitionDistribution, float]],
    inflow: Sequence[float],
    dt: float,
) -> float:
    """Transient-compartment value by the convolution-sum discretization.

    dt * sum_i [mu1*gamma1 + mu2*gamma2](t_{n+1-i}) * sigma_in(t_{i+1}),
    with ``inflow`` in ascending time order ending at the evaluation step.
    """
    buf = np.asarray(inflow, dtype=float)
    w_rev, plateau = _branch_weights(branches, dt)
    pos = buf.size - 1
    val = _window_dot(w_rev, buf, pos)
    if pos >= w_rev.size:
        val += plateau * float(np.sum(buf[: pos - w_rev.size + 1]))
    return dt * val


def compartments_update_discretization(
    prev: np.ndarray, flows: np.ndarray, dt: float, s_next: float | None = None
) -> np.ndarray:
    """Advance all eight compartments by dt * (inflows - outflows).

    ``flows`` holds the ten transition values at t_{n+1} in TransitionId
    order.  When ``s_next`` is given it replaces the matrix row for S
    (the production path computes S from the implicit-style division,
    which is algebraically the same but not the same rounding).
    """
    out = prev + dt * (_UPDATE_MATRIX @ flows)
    if s_next is not None:
        out[0] = s_next
    return out


def occupancy_weights(
    params: ParameterSet, dt: float
) -> dict[InfectionState, tuple[TransitionId, np.ndarray, float]]:
    """Sum-discretization weights per transient compartment.

    Maps each of E, C, I, H, U to (inflow transition, reversed weight
    array for lags 1..K, frozen plateau value beyond K).
    """
    mus = params.mus
    out = {}
    for state, (inflow, outs) in _COMPARTMENT_FLOWS.items():
        branches = [(params.gamma[t], mus[t]) for t in outs]
        w_rev, plateau = _branch_weights(branches, dt)
        out[state] = (inflow, w_rev, plateau)
    return out


def compartments_from_history(
    params: ParameterSet,
    flows: "FlowHistory | Mapping[TransitionId, np.ndarray]",
    dt: float,
    deaths: float,
) -> np.ndarray:
    """Start compartments consistent with a pre-history of flows.

    Transient pools come from the truncated occupancy sums evaluated at
    the final history index (the same arithmetic the sum path uses, so a
    run started from the result keeps the two compartment paths aligned),
    R accumulates the terminal flows over the window, D is supplied by
    the caller, and S is the remainder to N.
    """
    arrays = flows.flows if isinstance(flows, FlowHistory) else flows
    comp = np.zeros(len(InfectionState))
    pos0 = arrays[TransitionId.S_E].size - 1
    for z, (inflow, w_rev, plateau) in occupancy_weights(params, dt).items():
        buf = arrays[inflow]
        val = _window_dot(w_rev, buf, pos0)
        older = pos0 - w_rev.size
        if older >= 0:
            val += plateau * float(np.sum(buf[: older + 1]))
        comp[z] = dt * val
    comp[InfectionState.R] = dt * sum(float(np.sum(arrays[t])) for t in _TERMINAL_R)
    comp[InfectionState.D] = deaths
    occupied = float(np.sum(comp))
    if occupied > params.N:
        raise ValueError(
            f"history implies {occupied!r} individuals outside S, more than N = {params.N!r}"
        )
    comp[InfectionState.S] = params.N - occupied
    return comp


@dataclass(frozen=True)
class IdeSolverState:
    """Everything needed to start stepping: parameters, pre-history, kernels.

    ``history`` covers exactly the pre-history indices a+1..0; the force
    of infection weights are the products xi*rho*(mu*gamma1+(1-mu)*gamma2)
    evaluated at lags dt, 2*dt, ... up to the truncated support.
    """

    params: ParameterSet
    grid: TimeGrid
    history: FlowHistory
    compartments_at_0: CompartmentState
    kernels: Mapping[TransitionId, np.ndarray]
    foi_weights_C: np.ndarray
    foi_weights_I: np.ndarray
    neg_kernels_rev: Mapping[TransitionId, np.ndarray]
    foi_c_rev: np.ndarray
    foi_i_rev: np.ndarray
    occupancy: Mapping[InfectionState, tuple[TransitionId, np.ndarray, float]]


def _foi_weight_arrays(params: ParameterSet, dt: float) -> tuple[np.ndarray, np.ndarray]:
    mus = params.mus
    wc_rev, _ = _branch_weights(
        [(params.gamma[TransitionId.C_I], mus[TransitionId.C_I]),
         (params.gamma[TransitionId.C_R], mus[TransitionId.C_R])], dt)
    wi_rev, _ = _branch_weights(
        [(params.gamma[TransitionId.I_H], mus[TransitionId.I_H]),
         (params.gamma[TransitionId.I_R], mus[TransitionId.I_R])], dt)
    taus_c = np.arange(wc_rev.size, 0, -1) * dt
    taus_i = np.arange(wi_rev.size, 0, -1) * dt
    foi_c = wc_rev * params.xi_C.at(taus_c) * params.rho_C.at(taus_c)
    foi_i = wi_rev * params.xi_I.at(taus_i) * params.rho_I.at(taus_i)
    foi_c.flags.writeable = False
    foi_i.flags.writeable = False
    return foi_c, foi_i


def build_solver_state(
    params: ParameterSet,
    history: FlowHistory,
    compartments_at_0: CompartmentState | np.ndarray,
) -> IdeSolverState:
    """Validate the entry data and precompute kernels and weight tables."""
    if not isinstance(compartments_at_0, CompartmentState):
        compartments_at_0 = CompartmentState(compartments_at_0)
    grid = history.grid
    if grid.a >= 0 or history.length != -grid.a:
        raise ValueError("history must cover exactly the pre-history indices a+1..0 with a < 0")
    total = compartments_at_0.total
    if abs(total - params.N) > _INIT_MASS_TOL * params.N:
        raise ValueError(
            f"initial compartments sum to {total!r}, expected N = {params.N!r}"
        )
    if not compartments_at_0[InfectionState.D] < params.N:
        raise ValueError("initial deaths must be below the total population")
    dt = grid.dt
    kernels = {t: backwards_difference_kernel(params.gamma[t], dt) for t in FLOW_SOURCE}
    neg_rev = {t: _neg_kernel_rev(params.gamma[t], dt) for t in FLOW_SOURCE}
    foi_c_rev, foi_i_rev = _foi_weight_arrays(params, dt)
    return IdeSolverState(
        params=params,
        grid=grid,
        history=history,
        compartments_at_0=compartments_at_0,
        kernels=kernels,
        foi_weights_C=foi_c_rev[::-1],
        foi_weights_I=foi_i_rev[::-1],
        neg_kernels_rev=neg_rev,
        foi_c_rev=foi_c_rev,
        foi_i_rev=foi_i_rev,
        occupancy=occupancy_weights(params, dt),
    )


def force_of_infection(state: IdeSolverState) -> float:
    """lambda at t_0, from the pre-history flows alone.

    Instantiates the force-of-infection sum one index before the first
    step (summing over i = a..-1); the divisor uses the deaths at t_0.
    lambda at later indices is produced by :func:`simulate` step by step.
    """
    p = state.params
    divisor = p.N - state.compartments_at_0[InfectionState.D]
    if divisor <= 0.0:
        raise RuntimeError("deaths reached the total population")
    dt = state.grid.dt
    pos = state.history.length - 1
    acc = _window_dot(state.foi_c_rev, state.history[TransitionId.E_C], pos)
    acc += _window_dot(state.foi_i_rev, state.history[TransitionId.C_I], pos)
    return p.contact.rate_at(0.0) / divisor * dt * acc


def simulate(
    state: IdeSolverState,
    t_end: float,
    mode: str = "update",
    stop_threshold: float | None = None,
) -> SimulationResult:
    """Run the scheme for n = 0..n_max-1 and record everything.

    ``mode`` selects which compartment path is recorded: "update"
    (incremental, the production default), "sum" (truncated convolution
    sums), or "both" (record update, track the maximum pointwise gap in
    ``max_sum_update_gap``).  If ``stop_threshold`` is given, the run
    ends early at the first step with dt*sigma_SE below it.
    """
    if mode not in ("sum", "update", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    p = state.params
    dt = state.grid.dt
    a = state.grid.a
    n_max = round(t_end / dt)
    if n_max < 0 or abs(n_max * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end = {t_end} is not a nonnegative grid multiple of dt = {dt}")
    p.contact.validate_grid_aligned(dt)

    n_pre = -a
    total_len = n_pre + n_max
    n_states = len(InfectionState)
    n_trans = len(TransitionId)

    buf = [np.zeros(max(total_len, n_pre)) for _ in range(n_trans)]
    for t in TransitionId:
        buf[t][:n_pre] = state.history[t]
    # Running prefix sums of the transient compartments' inflows, for the
    # O(1) plateau term of the sum path.
    cum_ids = sorted({inflow for inflow, _, _ in state.occupancy.values()})
    cum = {t: np.zeros(max(total_len, n_pre)) for t in cum_ids}
    for t in cum_ids:
        np.cumsum(buf[t][:n_pre], out=cum[t][:n_pre])

    track_sum = mode in ("sum", "both")
    record_sum = mode == "sum"
    out = np.zeros((n_max + 1, n_states))
    out[0] = state.compartments_at_0.counts
    upd = out[0].copy()
    foi = np.zeros(n_max + 1)
    foi[0] = force_of_infection(state)

    N = p.N
    phis = np.array([p.contact.rate_at(k * dt) for k in range(n_max + 1)])
    mus = p.mus
    src = {t: FLOW_SOURCE[t] for t in DOWNSTREAM_ORDER}
    neg_rev = state.neg_kernels_rev
    foi_c_rev, foi_i_rev = state.foi_c_rev, state.foi_i_rev
    buf_ec, buf_ci = buf[TransitionId.E_C], buf[TransitionId.C_I]
    r_anchor = upd[InfectionState.R]
    d_anchor = upd[InfectionState.D]

    max_mass = abs(float(upd.sum()) - N)
    max_gap = 0.0
    flows_now = np.zeros(n_trans)
    n_final = n_max

    for n in range(n_max):
        pos = n_pre + n
        lam = foi[n]
        s_next, sig_se = step_susceptible(upd[0], lam, dt)
        buf[TransitionId.S_E][pos] = sig_se
        for t in DOWNSTREAM_ORDER:
            buf[t][pos] = mus[t] * dt * _window_dot(neg_rev[t], buf[src[t]], pos)
        for t in cum_ids:
            c = cum[t]
            c[pos] = c[pos - 1] + buf[t][pos]
        for t in TransitionId:
            flows_now[t] = buf[t][pos]

        prev_d = upd[InfectionState.D]
        upd = compartments_update_discretization(upd, flows_now, dt, s_next)
        mass = abs(float(upd.sum()) - N)
        if mass > max_mass:
            max_mass = mass

        if track_sum:
            row = np.empty(n_states)
            row[0] = s_next
            for z, (inflow, w_rev, plateau) in state.occupancy.items():
                val = _window_dot(w_rev, buf[inflow], pos)
                older = pos - w_rev.size
                if older >= 0:
                    val += plateau * cum[inflow][older]
                row[z] = dt * val
            row[InfectionState.R] = r_anchor + dt * sum(
                float(np.sum(buf[t][n_pre : pos + 1])) for t in _TERMINAL_R
            )
            row[InfectionState.D] = d_anchor + dt * float(
                np.sum(buf[TransitionId.U_D][n_pre : pos + 1])
            )
            gap = float(np.max(np.abs(row - upd)))
            if gap > max_gap:
                max_gap = gap
            out[n + 1] = row if record_sum else upd
        else:
            out[n + 1] = upd

        divisor = N - prev_d
        if divisor <= 0.0:
            raise RuntimeError("deaths reached the total population")
        foi[n + 1] = (
            phis[n + 1]
            / divisor
            * dt
            * (_window_dot(foi_c_rev, buf_ec, pos) + _window_dot(foi_i_rev, buf_ci, pos))
        )

        if stop_threshold is not None and dt * sig_se < stop_threshold:
            n_final = n + 1
            break

    if n_final < n_max:
        out = out[: n_final + 1]
        foi = foi[: n_final + 1]
    run_grid = TimeGrid(dt, a, n_final)
    flows = FlowHistory(
        run_grid, {t: buf[t][: n_pre + n_final] for t in TransitionId}
    )

    steps_per_day = round(1.0 / dt)
    if steps_per_day >= 1 and abs(steps_per_day * dt - 1.0) < 1e-9:
        n_days = (n_final * dt + 1e-9) // 1.0
        n_days = int(n_days)
        sig = buf[TransitionId.S_E]
        daily = np.array(
            [
                dt * float(np.sum(sig[n_pre + d * steps_per_day : n_pre + (d + 1) * steps_per_day]))
                for d in range(n_days)
            ]
        )
    else:
        daily = np.zeros(0)

    return SimulationResult(
        grid=run_grid,
        compartments=out,
        flows=flows,
        force_of_infection=foi,
        daily_new_transmissions=daily,
        max_mass_residual=max_mass,
        max_sum_update_gap=max_gap,
    )
