"""Containers and validation: grids, schedules, parameters, results."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secir_ide import (
    AgeDependentFactor,
    CompartmentState,
    ContactSchedule,
    FlowHistory,
    InfectionState,
    ParameterSet,
    SimulationResult,
    TimeGrid,
    TransitionId,
)

from conftest import make_exponential_params


def test_compartment_and_transition_layout():
    assert [s.name for s in InfectionState] == ["S", "E", "C", "I", "H", "U", "R", "D"]
    assert len(TransitionId) == 10
    assert TransitionId.S_E.source is InfectionState.S
    assert TransitionId.S_E.target is InfectionState.E
    assert TransitionId.U_D.source is InfectionState.U
    assert TransitionId.U_D.target is InfectionState.D


def test_time_grid_exact_times():
    g = TimeGrid(0.1, -3, 5)
    assert g.time(7) == 0.7000000000000001  # 7*0.1, never accumulated
    assert np.array_equal(g.times(), np.arange(6) * 0.1)
    assert np.array_equal(g.times(-3, 0), np.arange(-3, 1) * 0.1)


@given(st.integers(-1000, 1000), st.sampled_from([1.0, 0.5, 0.1, 0.01]))
def test_time_grid_index_round_trip(k, dt):
    g = TimeGrid(dt, -1000, 1000)
    assert g.index_of(g.time(k)) == k


def test_time_grid_rejects_off_grid_times():
    g = TimeGrid(0.1, 0, 10)
    with pytest.raises(ValueError, match="not aligned"):
        g.index_of(0.05)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0, 1)
    with pytest.raises(ValueError):
        TimeGrid(0.1, 1, 1)
    with pytest.raises(ValueError):
        TimeGrid(0.1, 0, -1)


def test_contact_schedule_change_applies_at_change_time():
    sched = ContactSchedule(((0.0, 2.0), (3.0, 1.0)))
    assert sched.rate_at(-5.0) == 2.0
    assert sched.rate_at(2.99) == 2.0
    assert sched.rate_at(3.0) == 1.0  # left endpoint of the new segment
    assert sched.rate_at(100.0) == 1.0
    assert sched.change_times() == (3.0,)


def test_contact_schedule_validation():
    with pytest.raises(ValueError, match="negative contact rate"):
        ContactSchedule(((0.0, -1.0),))
    with pytest.raises(ValueError, match="sorted strictly"):
        ContactSchedule(((0.0, 1.0), (0.0, 2.0)))
    with pytest.raises(ValueError, match="at least one segment"):
        ContactSchedule(())
    sched = ContactSchedule(((0.0, 1.0), (0.25, 2.0)))
    sched.validate_grid_aligned(0.05)
    with pytest.raises(ValueError, match="does not lie on the grid"):
        sched.validate_grid_aligned(0.1)


def test_age_dependent_factor_interpolates_flat_at_edges():
    f = AgeDependentFactor.tabulated([1.0, 2.0, 4.0], [1.0, 0.5, 0.0])
    assert f.at(-3.0) == 1.0  # clamped to tau = 0, flat left
    assert f.at(1.5) == pytest.approx(0.75)
    assert f.at(10.0) == 0.0
    assert not f.is_constant
    c = AgeDependentFactor.constant(0.3)
    assert c.is_constant
    assert np.array_equal(c.at(np.array([0.0, 5.0])), [0.3, 0.3])


def test_age_dependent_factor_validation():
    with pytest.raises(ValueError, match="outside"):
        AgeDependentFactor.constant(1.5)
    with pytest.raises(ValueError, match="strictly increasing"):
        AgeDependentFactor.tabulated([2.0, 1.0], [0.1, 0.2])
    with pytest.raises(ValueError, match="matching"):
        AgeDependentFactor.tabulated([1.0], [0.1])


def test_parameter_set_validation_messages():
    p = make_exponential_params()
    with pytest.raises(ValueError, match="mu_CI outside"):
        dataclasses.replace(p, mu_CI=1.5)
    gamma = dict(p.gamma)
    del gamma[TransitionId.E_C]
    with pytest.raises(ValueError, match="missing stay-time distribution for E_C"):
        ParameterSet(
            N=p.N, mu_CI=0.5, mu_IH=0.5, mu_HU=0.5, mu_UD=0.5, contact=p.contact,
            rho_C=p.rho_C, rho_I=p.rho_I, xi_C=p.xi_C, xi_I=p.xi_I, gamma=gamma,
        )


def test_mus_mixes_branch_probabilities():
    p = make_exponential_params()
    mus = p.mus
    assert mus[TransitionId.E_C] == 1.0
    assert mus[TransitionId.C_I] == 0.5
    assert mus[TransitionId.C_R] == 0.5
    assert sum(mus[t] for t in (TransitionId.U_D, TransitionId.U_R)) == 1.0


def test_compartment_state_guards():
    state = CompartmentState(np.arange(8, dtype=float))
    assert state.total == pytest.approx(28.0)
    assert state[InfectionState.C] == 2.0
    with pytest.raises(ValueError):
        state.counts[0] = 5.0  # read-only
    with pytest.raises(ValueError):
        CompartmentState(np.array([-1.0, 0, 0, 0, 0, 0, 0, 0]))
    with pytest.raises(ValueError):
        CompartmentState(np.zeros(7))


def test_flow_history_guards():
    grid = TimeGrid(0.5, -4, 0)
    flows = {t: np.full(4, float(t)) for t in TransitionId}
    hist = FlowHistory(grid, flows)
    assert hist.start_index == -3
    assert hist.length == 4
    assert hist.at(TransitionId.E_C, 0) == float(TransitionId.E_C)
    with pytest.raises(ValueError, match="missing transition"):
        FlowHistory(grid, {TransitionId.S_E: np.ones(4)})
    bad = dict(flows)
    bad[TransitionId.U_R] = np.ones(3)
    with pytest.raises(ValueError, match="share one index range"):
        FlowHistory(grid, bad)
    bad[TransitionId.U_R] = np.array([1.0, -2.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="negative or non-finite"):
        FlowHistory(grid, bad)


def test_simulation_result_shape_guards():
    grid = TimeGrid(0.5, -2, 3)
    # flows cover indices a+1 .. n_max = -1 .. 3
    flows = FlowHistory(grid, {t: np.zeros(5) for t in TransitionId})
    comp = np.zeros((4, 8))
    res = SimulationResult(grid, comp, flows, np.zeros(4), np.zeros(0))
    assert np.array_equal(res.times, np.arange(4) * 0.5)
    assert res.flow_series(TransitionId.S_E).size == 4
    assert res.flow_series(TransitionId.S_E, start=-1).size == 5
    with pytest.raises(ValueError, match="one row per grid index"):
        SimulationResult(grid, np.zeros((3, 8)), flows, np.zeros(4), np.zeros(0))
    with pytest.raises(ValueError, match="cover indices"):
        SimulationResult(grid, comp, flows, np.zeros(3), np.zeros(0))
    with pytest.raises(ValueError, match="negative force"):
        SimulationResult(grid, comp, flows, np.full(4, -1.0), np.zeros(0))
