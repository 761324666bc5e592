"""End-to-end acceptance runs: the bundled studies at their stated tolerances.

Everything here runs the full-size workloads (45-day runs, a five-step
convergence sweep, a 100-day surveillance round trip, 200 randomized
cases), so this module is noticeably slower than the unit modules.
"""

import dataclasses
import json
import time
from datetime import date

import numpy as np
import pytest

from secir_ide import (
    AgeDependentFactor,
    CompartmentState,
    ContactSchedule,
    FlowHistory,
    InfectionState,
    ParameterSet,
    TimeGrid,
    TransitionDistribution,
    TransitionId,
    backwards_difference_kernel,
    build_solver_state,
    changepoint_experiment,
    compartments_from_history,
    constant_flow_history,
    convergence_study,
    load_case_data,
    mean_death_delay,
    save_case_data,
    scenario_run,
    simulate,
    stationary_history,
    support_steps,
    weighted_ode_mean_stay_times,
)
from secir_ide.cli import parameters_from_config
from secir_ide.experiments import generate_synthetic_outbreak

from conftest import make_exponential_params


def _config(configs_dir, name):
    return json.loads((configs_dir / name).read_text())


@pytest.fixture(scope="module")
def b_config(configs_dir):
    return _config(configs_dir, "appendix_b_convergence.json")


@pytest.fixture(scope="module")
def c_params(configs_dir):
    cfg = _config(configs_dir, "appendix_c_changepoint.json")
    return parameters_from_config(cfg["parameters"])


@pytest.fixture(scope="module")
def convergence(b_config):
    params = parameters_from_config(b_config["parameters"])
    y0 = CompartmentState.from_mapping(
        {InfectionState[k]: float(v) for k, v in b_config["compartments_at_0"].items()}
    )
    block = b_config["convergence"]
    start = time.perf_counter()
    study = convergence_study(
        params,
        y0.counts,
        [float(v) for v in block["dts"]],
        spin_days=float(block["spin_days"]),
        compare_days=float(block["compare_days"]),
        dt_reference=float(block["dt_reference"]),
        record_dt=float(block["record_dt"]),
    )
    elapsed = time.perf_counter() - start
    return params, study, elapsed


@pytest.fixture(scope="module")
def both_mode_run(c_params):
    hist, comp0, _ = stationary_history(c_params, 0.01)
    state = build_solver_state(c_params, hist, comp0)
    return simulate(state, 45.0, mode="both")


@pytest.fixture(scope="module")
def changepoints(c_params):
    return {
        factor: changepoint_experiment(c_params, 0.01, 2.0, 12.0, factor)
        for factor in (2.0, 0.5, 1.0)
    }


@pytest.fixture(scope="module")
def long_horizon_run():
    params = make_exponential_params(phi=2.0)
    hist, comp0 = constant_flow_history(params, 1.0, 1.0)
    state = build_solver_state(params, hist, comp0)
    res = simulate(state, 2000.0, stop_threshold=1e-8 * params.N)
    return params, res


GENERATOR_T0 = date(2020, 9, 1)
SCENARIO_T0 = date(2020, 10, 1)


def _surveillance_params(contact: ContactSchedule) -> ParameterSet:
    """The lognormal parameter set behind the bundled surveillance tables."""
    moments = {
        "E_C": (4.5, 1.5),
        "C_I": (1.1, 0.9),
        "C_R": (8.0, 2.0),
        "I_H": (6.6, 4.9),
        "I_R": (8.0, 2.0),
        "H_U": (1.5, 2.0),
        "H_R": (18.1, 6.3),
        "U_D": (10.7, 4.8),
        "U_R": (18.1, 6.3),
    }
    return ParameterSet(
        N=83155031.0,
        mu_CI=0.793099,
        mu_IH=0.078643,
        mu_HU=0.173176,
        mu_UD=0.387803,
        contact=contact,
        rho_C=AgeDependentFactor.constant(0.0733271),
        rho_I=AgeDependentFactor.constant(0.0733271),
        xi_C=AgeDependentFactor.constant(1.0),
        xi_I=AgeDependentFactor.constant(0.3),
        gamma={
            TransitionId[name]: TransitionDistribution.lognormal(mean, std)
            for name, (mean, std) in moments.items()
        },
    )


@pytest.fixture(scope="module")
def surveillance_round_trip(tmp_path_factory):
    generator = _surveillance_params(ContactSchedule(((0.0, 3.6), (53.0, 2.5))))
    result, table = generate_synthetic_outbreak(
        generator, 0.01, 3200.0, GENERATOR_T0, 100, 81
    )
    # push the table through its file format before re-initializing
    tmp = tmp_path_factory.mktemp("surveillance")
    save_case_data(table, tmp / "cases.csv", tmp / "icu.csv")
    loaded = load_case_data(tmp / "cases.csv", tmp / "icu.csv")
    # day 30 of the generator is day 0 of the re-initialized run
    rerun_params = _surveillance_params(ContactSchedule(((0.0, 3.6), (23.0, 2.5))))
    sc = scenario_run(loaded, rerun_params, 0.01, SCENARIO_T0, 45.0)
    return generator, result, table, rerun_params, sc


def test_flow_scheme_converges_first_order_against_reference(convergence):
    params, study, elapsed = convergence
    assert elapsed < 120.0
    assert np.array_equal(study.dts, [0.1, 0.05, 0.01, 0.005, 0.001])
    assert len(study.labels) == 18
    for label in study.labels:
        slope = study.slopes[label]
        assert 0.85 <= slope <= 1.15, f"{label}: slope {slope}"
        errs = study.errors[label]
        assert np.all(np.diff(errs) < 0.0), f"{label}: errors not decreasing {errs}"


def test_sum_and_update_compartment_paths_agree_for_45_days(c_params, both_mode_run):
    assert both_mode_run.grid.n_max == 4500
    assert both_mode_run.max_sum_update_gap <= 1e-10 * c_params.N


def test_population_is_conserved_in_every_retained_run(
    convergence, both_mode_run, changepoints, long_horizon_run, surveillance_round_trip
):
    params_b, study, _ = convergence
    for run in study.runs:
        assert run.max_mass_residual <= 1e-9 * params_b.N
    c_n = changepoints[1.0].params.N
    assert both_mode_run.max_mass_residual <= 1e-9 * c_n
    for r in changepoints.values():
        assert r.ide.max_mass_residual <= 1e-9 * c_n
    params_lh, run_lh = long_horizon_run
    assert run_lh.max_mass_residual <= 1e-9 * params_lh.N
    generator, result, _, rerun_params, sc = surveillance_round_trip
    assert result.max_mass_residual <= 1e-9 * generator.N
    assert sc.ide.max_mass_residual <= 1e-9 * rerun_params.N


def _random_factor(rng) -> AgeDependentFactor:
    if rng.random() < 0.3:
        taus = np.cumsum(rng.uniform(0.3, 4.0, size=3))
        values = rng.uniform(0.05, 1.0, size=3)
        return AgeDependentFactor.tabulated(taus, values)
    return AgeDependentFactor.constant(float(rng.uniform(0.05, 1.0)))


def _random_distribution(rng) -> TransitionDistribution:
    mean = float(rng.uniform(0.2, 6.0))
    kind = rng.integers(3)
    if kind == 0:
        return TransitionDistribution.exponential(mean)
    if kind == 1:
        return TransitionDistribution.lognormal(mean, mean * float(rng.uniform(0.4, 1.2)))
    return TransitionDistribution.smoother_cosine(2.0 * mean)


def _random_case(rng):
    dt = float(rng.choice([1.0, 0.5, 0.25, 0.1]))
    n = float(10.0 ** rng.uniform(3.0, 8.0))
    base = make_exponential_params()
    params = dataclasses.replace(
        base,
        N=n,
        mu_CI=float(rng.uniform(0.05, 0.95)),
        mu_IH=float(rng.uniform(0.05, 0.95)),
        mu_HU=float(rng.uniform(0.05, 0.95)),
        mu_UD=float(rng.uniform(0.05, 0.95)),
        contact=ContactSchedule.constant(float(rng.uniform(0.1, 4.0))),
        rho_C=_random_factor(rng),
        rho_I=_random_factor(rng),
        xi_C=_random_factor(rng),
        xi_I=_random_factor(rng),
        gamma={t: _random_distribution(rng) for t in base.gamma},
    )
    n_pre = max(support_steps(d, dt) for d in params.gamma.values())
    flows = {
        t: rng.uniform(0.0, 1.0, size=n_pre) * n * 1e-4 for t in TransitionId
    }
    while True:
        try:
            comp = compartments_from_history(params, flows, dt, 0.0)
            break
        except ValueError:
            flows = {t: 0.25 * v for t, v in flows.items()}
    deaths = float(rng.uniform(0.0, 0.4)) * comp[InfectionState.S]
    comp = compartments_from_history(params, flows, dt, deaths)
    hist = FlowHistory(TimeGrid(dt, -n_pre, 0), flows)
    state = build_solver_state(params, hist, CompartmentState(comp))
    return params, state, dt


def test_randomized_runs_respect_positivity_and_monotonicity():
    rng = np.random.default_rng(20260815)
    for case in range(200):
        params, state, dt = _random_case(rng)
        res = simulate(state, 2.0)
        label = f"case {case} (dt={dt}, N={params.N:.3g})"
        for t in TransitionId:
            assert np.all(res.flows[t] >= 0.0), f"{label}: negative flow {t.name}"
        assert np.all(res.force_of_infection >= 0.0), label
        comp = res.compartments
        assert np.all(comp >= 0.0), label
        assert np.all(comp <= params.N), label
        assert np.all(comp[:, InfectionState.D] < params.N), label
        assert np.all(np.diff(comp[:, InfectionState.S]) <= 0.0), label
        assert np.all(np.diff(comp[:, InfectionState.R]) >= 0.0), label
        assert np.all(np.diff(comp[:, InfectionState.D]) >= 0.0), label
        assert res.max_mass_residual <= 1e-9 * params.N, label


def test_outbreak_burns_out_below_threshold(long_horizon_run):
    params, res = long_horizon_run
    n = params.N
    # the run must have hit the stopping rule, not the horizon
    assert res.grid.n_max < 2000
    final_flows = np.array([res.flows[t][-1] for t in TransitionId])
    assert np.all(final_flows < 1e-6 * n)
    assert res.force_of_infection[-1] < 1e-6 * n
    tail = max(2, res.grid.n_max // 10)
    for s in (InfectionState.S, InfectionState.R, InfectionState.D):
        series = res.compartments[-tail:, s]
        assert np.ptp(series) <= 1e-6 * n, s.name


def test_weighted_mean_stay_times_match_reference_values(c_params):
    t = weighted_ode_mean_stay_times(c_params)
    assert t["T_C"] == pytest.approx(2.527617, abs=5e-6)
    assert t["T_I"] == pytest.approx(7.889900, abs=5e-6)
    assert t["T_H"] == pytest.approx(15.225278, abs=5e-6)
    assert t["T_U"] == pytest.approx(15.230258, abs=5e-6)


def test_contact_jump_transfers_to_transmissions_with_flat_plateau(changepoints):
    for factor in (2.0, 0.5):
        r = changepoints[factor]
        assert r.ide_jump == pytest.approx(factor, rel=0.01)
        assert r.ode_jump == pytest.approx(factor, rel=0.01)
        assert r.ide_plateau_dev < r.ode_plateau_dev
    assert changepoints[1.0].constancy <= 1e-3


def test_synthetic_surveillance_round_trip_recovers_transmissions(
    surveillance_round_trip,
):
    _, result, table, rerun_params, sc = surveillance_round_trip
    # deaths at the new start must consume the table exactly
    oracle = np.interp(
        -mean_death_delay(rerun_params),
        table.day_offsets(SCENARIO_T0),
        table.cumulative_deaths,
    )
    assert sc.compartments_at_0[InfectionState.D] == oracle
    # day d of the re-run is generator day 30 + d
    rerun_daily = sc.ide.daily_new_transmissions
    generator_daily = result.daily_new_transmissions[30:75]
    assert rerun_daily.shape == generator_daily.shape == (45,)
    rel = np.abs(rerun_daily / generator_daily - 1.0)
    assert np.max(rel[1:]) <= 0.02, f"max relative gap {np.max(rel[1:]):.4f}"


@pytest.mark.parametrize("dt", [1.0, 0.1, 0.01])
def test_kernel_mass_telescopes_to_one_for_bundled_distributions(
    configs_dir, c_params, dt
):
    b_params = parameters_from_config(
        _config(configs_dir, "appendix_b_convergence.json")["parameters"]
    )
    for params in (b_params, c_params):
        for t, d in params.gamma.items():
            kernel = backwards_difference_kernel(d, dt)
            mass = -dt * float(np.sum(kernel))
            assert 1.0 - 1e-10 - 1e-12 <= mass <= 1.0 + 1e-12, (
                f"{t.name} {d.family} at dt={dt}: mass {mass!r}"
            )
