"""The nonstandard stepping scheme: single operations and short runs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secir_ide import (
    CompartmentState,
    FlowHistory,
    InfectionState,
    TimeGrid,
    TransitionDistribution,
    TransitionId,
    build_solver_state,
    compartments_from_history,
    compartments_update_discretization,
    constant_flow_history,
    force_of_infection,
    occupancy_sum,
    simulate,
    step_susceptible,
    transition_flow,
)

from conftest import make_exponential_params


def _history(params, dt, n_pre, overrides=None):
    """All-zero pre-history with optional per-transition arrays."""
    flows = {t: np.zeros(n_pre) for t in TransitionId}
    if overrides:
        flows.update({t: np.asarray(v, dtype=float) for t, v in overrides.items()})
    return FlowHistory(TimeGrid(dt, -n_pre, 0), flows)


def test_step_susceptible_oracle():
    s_next, sigma = step_susceptible(1000.0, 0.1, 0.1)
    assert s_next == pytest.approx(1000.0 / 1.01, rel=1e-15)
    assert sigma == pytest.approx(100.0 / 1.01, rel=1e-15)


@given(
    s=st.floats(0.0, 1e9),
    lam=st.floats(0.0, 10.0),
    dt=st.sampled_from([1.0, 0.1, 0.01]),
)
def test_step_susceptible_is_positive_and_consistent(s, lam, dt):
    s_next, sigma = step_susceptible(s, lam, dt)
    assert 0.0 <= s_next <= s
    assert sigma >= 0.0
    # the implicit-style division satisfies S_{n+1} + dt*sigma = S_n
    assert s_next + dt * sigma == pytest.approx(s, rel=1e-12, abs=1e-12)


def test_transition_flow_unit_pulse_oracle():
    d = TransitionDistribution.exponential(1.0)
    # single current-step inflow: flow = -gamma'(dt) * dt * 1 = 1 - e^-1
    assert transition_flow(d, 1.0, [1.0], 1.0) == pytest.approx(
        1.0 - math.exp(-1.0), rel=1e-14
    )
    assert transition_flow(d, 0.25, [1.0], 1.0) == pytest.approx(
        0.25 * (1.0 - math.exp(-1.0)), rel=1e-14
    )


def test_transition_flow_superposition():
    d = TransitionDistribution.lognormal(2.0, 1.0)
    a = np.array([0.3, 0.0, 1.2, 0.7])
    b = np.array([0.0, 2.0, 0.1, 0.0])
    fa = transition_flow(d, 0.8, a, 0.5)
    fb = transition_flow(d, 0.8, b, 0.5)
    assert transition_flow(d, 0.8, a + b, 0.5) == pytest.approx(fa + fb, rel=1e-12)


def test_occupancy_sum_exponential_oracle():
    d = TransitionDistribution.exponential(1.0)
    # one person entering at the evaluation step, weighted by gamma(dt)
    assert occupancy_sum([(d, 1.0)], [1.0], 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_occupancy_sum_of_constant_inflow_approximates_mean_stay():
    d = TransitionDistribution.exponential(1.2)
    dt = 0.01
    n = 4000  # far beyond the truncated support
    val = occupancy_sum([(d, 1.0)], np.ones(n), dt)
    # right-endpoint rule of integral gamma = T, first-order in dt
    assert val == pytest.approx(1.2, rel=0.01)


def test_force_of_infection_pulse_oracles():
    params = make_exponential_params(N=1000.0)
    dt = 1.0
    pulse = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    hist = _history(params, dt, 5, {TransitionId.E_C: pulse})
    comp0 = CompartmentState(compartments_from_history(params, hist.flows, dt, 0.0))
    lam = force_of_infection(build_solver_state(params, hist, comp0))
    assert lam == pytest.approx(math.exp(-1.0 / 1.2) / 1000.0, rel=1e-13)

    hist = _history(params, dt, 5, {TransitionId.C_I: pulse})
    comp0 = CompartmentState(compartments_from_history(params, hist.flows, dt, 0.0))
    lam = force_of_infection(build_solver_state(params, hist, comp0))
    assert lam == pytest.approx(math.exp(-1.0 / 0.3) / 1000.0, rel=1e-13)


def test_force_of_infection_ignores_extra_leading_zeros():
    params = make_exponential_params()
    dt = 0.5
    rng = np.random.default_rng(7)
    base = rng.uniform(0.0, 2.0, size=40)
    lams = []
    for pad in (0, 13):
        arr = np.concatenate([np.zeros(pad), base])
        hist = _history(params, dt, arr.size, {TransitionId.E_C: arr})
        comp0 = CompartmentState(compartments_from_history(params, hist.flows, dt, 0.0))
        lams.append(force_of_infection(build_solver_state(params, hist, comp0)))
    assert lams[0] == lams[1]


def test_compartments_from_history_complement_and_guard():
    params = make_exponential_params()
    dt = 0.5
    rng = np.random.default_rng(3)
    flows = {t: rng.uniform(0.0, 1.0, size=30) for t in TransitionId}
    comp = compartments_from_history(params, flows, dt, 12.0)
    assert comp[InfectionState.D] == 12.0
    assert comp[InfectionState.S] == pytest.approx(
        params.N - comp[1:].sum(), rel=1e-15
    )
    assert np.all(comp >= 0.0)
    huge = {t: np.full(30, 1e5) for t in TransitionId}
    with pytest.raises(ValueError, match="more than N"):
        compartments_from_history(params, huge, dt, 0.0)


def test_update_discretization_matrix():
    prev = np.linspace(100.0, 800.0, 8)
    flows = np.arange(1.0, 11.0)
    out = compartments_update_discretization(prev, flows, 0.1)
    sig = dict(zip(TransitionId, flows))
    assert out[InfectionState.S] == pytest.approx(prev[0] - 0.1 * sig[TransitionId.S_E])
    assert out[InfectionState.E] == pytest.approx(
        prev[1] + 0.1 * (sig[TransitionId.S_E] - sig[TransitionId.E_C])
    )
    assert out[InfectionState.D] == pytest.approx(prev[7] + 0.1 * sig[TransitionId.U_D])
    # replacement S from the implicit step overrides the matrix row
    out2 = compartments_update_discretization(prev, flows, 0.1, s_next=42.0)
    assert out2[InfectionState.S] == 42.0
    assert np.array_equal(out2[1:], out[1:])
    # every transition column moves mass between two rows, so totals persist
    assert out.sum() == pytest.approx(prev.sum(), rel=1e-14)


def test_sum_and_update_paths_agree_for_consistent_start():
    params = make_exponential_params(phi=2.0)
    hist, comp0 = constant_flow_history(params, 0.1, 5.0)
    state = build_solver_state(params, hist, comp0)
    res = simulate(state, 3.0, mode="both")
    assert res.max_sum_update_gap <= 1e-12 * params.N


def test_simulate_zero_days_returns_initial_state_only():
    params = make_exponential_params()
    hist, comp0 = constant_flow_history(params, 0.5, 1.0)
    res = simulate(build_solver_state(params, hist, comp0), 0.0)
    assert res.grid.n_max == 0
    assert res.compartments.shape == (1, 8)
    assert np.array_equal(res.compartments[0], comp0.counts)
    assert res.daily_new_transmissions.size == 0


def test_simulate_validates_mode_and_span():
    params = make_exponential_params()
    hist, comp0 = constant_flow_history(params, 0.5, 1.0)
    state = build_solver_state(params, hist, comp0)
    with pytest.raises(ValueError, match="unknown mode"):
        simulate(state, 1.0, mode="fancy")
    with pytest.raises(ValueError):
        simulate(state, 0.7)  # not a whole number of steps


def test_build_solver_state_guards():
    params = make_exponential_params()
    hist, comp0 = constant_flow_history(params, 0.5, 1.0)
    short = FlowHistory(
        TimeGrid(0.5, -3, 0), {t: hist[t][:4] for t in TransitionId}
    )
    with pytest.raises(ValueError, match="pre-history indices"):
        build_solver_state(params, short, comp0)
    bad_mass = np.array(comp0.counts)
    bad_mass[InfectionState.R] += 1.0
    with pytest.raises(ValueError, match="initial compartments sum"):
        build_solver_state(params, hist, bad_mass)
    dead = np.zeros(8)
    dead[InfectionState.D] = params.N
    with pytest.raises(ValueError, match="deaths must be below"):
        build_solver_state(params, hist, dead)


def test_stop_threshold_ends_run_early():
    params = make_exponential_params(phi=2.0)
    hist, comp0 = constant_flow_history(params, 0.5, 1.0)
    state = build_solver_state(params, hist, comp0)
    res = simulate(state, 30.0, stop_threshold=2.0 * params.N)
    assert res.grid.n_max == 1
    assert res.compartments.shape[0] == 2
    assert res.force_of_infection.size == 2


def test_short_run_conserves_mass_and_positivity():
    params = make_exponential_params(phi=1.5)
    hist, comp0 = constant_flow_history(params, 0.25, 2.0)
    res = simulate(build_solver_state(params, hist, comp0), 10.0)
    assert res.max_mass_residual <= 1e-10 * params.N
    assert np.all(res.compartments >= 0.0)
    assert np.all(res.compartments <= params.N)
    s = res.compartments[:, InfectionState.S]
    assert np.all(np.diff(s) <= 0.0)
    for state in (InfectionState.R, InfectionState.D):
        assert np.all(np.diff(res.compartments[:, state]) >= 0.0)
