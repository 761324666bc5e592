"""SECIR-type epidemic model driven by transition flows.

The model tracks eight compartments (susceptible, exposed, carrier,
infectious, hospitalized, intensive care, recovered, dead) whose coupling
runs through the *flows* between them rather than through per-compartment
rates.  Each flow is the convolution of its upstream flow with an
arbitrary stay-time distribution, which keeps the time spent in a
compartment realistic where constant-rate models force it to be
exponential.

Modules
-------
``core``
    Grids, parameter containers, result containers.
``distributions``
    Stay-time survival functions and their discretized kernels.
``solver``
    The nonstandard discretization of the flow equations.
``ode``
    The constant-rate (exponential) twin model used as a reference.
``data_init``
    Initialization of the flow history from daily surveillance tables.
``experiments``
    Convergence measurement, contact-change comparison, scenario runs.
``figures``
    Optional matplotlib renderings (imported on demand, needs Agg only).
``cli``
    The ``secir-ide`` command line entry point.
"""

from .core import (
    DISTRIBUTED_TRANSITIONS,
    AgeDependentFactor,
    CompartmentState,
    ContactSchedule,
    FlowHistory,
    InfectionState,
    ParameterSet,
    SimulationResult,
    TimeGrid,
    TransitionId,
    validate_parameters,
)
from .data_init import (
    ReportedData,
    backshift_flows,
    backshift_steps,
    build_initial_history,
    daily_flow_from_cumulative,
    extrapolate_comparison_series,
    interpolate_subdaily,
    load_case_data,
    mean_death_delay,
    pre_history_window,
    round_to_grid_steps,
    save_case_data,
    synthesize_reported_data,
)
from .distributions import (
    TransitionDistribution,
    backwards_difference_kernel,
    distribution_from_config,
    distribution_to_config,
    lognormal_underlying_params,
    support_steps,
    survival_on_grid,
    truncated_support,
)
from .experiments import (
    QUANTITY_LABELS,
    ChangepointResult,
    ConvergenceStudy,
    ScenarioResult,
    changepoint_experiment,
    constant_flow_history,
    convergence_study,
    discrete_l2_error,
    flow_label,
    generate_synthetic_outbreak,
    plateau_deviation,
    scenario_run,
    stationary_history,
    stationary_level,
    step_jump_factor,
)
from .ode import (
    OdeParameterSet,
    OdeResult,
    derive_ode_parameters,
    ode_flows,
    ode_force_of_infection,
    ode_rhs,
    reduce_ide_to_ode,
    rk_integrate,
    weighted_ode_mean_stay_times,
)
from .solver import (
    DOWNSTREAM_ORDER,
    FLOW_SOURCE,
    IdeSolverState,
    build_solver_state,
    compartments_from_history,
    compartments_update_discretization,
    force_of_infection,
    occupancy_sum,
    occupancy_weights,
    simulate,
    step_susceptible,
    transition_flow,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
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
    # distributions
    "TransitionDistribution",
    "lognormal_underlying_params",
    "truncated_support",
    "support_steps",
    "survival_on_grid",
    "backwards_difference_kernel",
    "distribution_from_config",
    "distribution_to_config",
    # solver
    "FLOW_SOURCE",
    "DOWNSTREAM_ORDER",
    "IdeSolverState",
    "build_solver_state",
    "force_of_infection",
    "step_susceptible",
    "transition_flow",
    "occupancy_sum",
    "occupancy_weights",
    "compartments_update_discretization",
    "compartments_from_history",
    "simulate",
    # ode
    "OdeParameterSet",
    "OdeResult",
    "ode_rhs",
    "rk_integrate",
    "reduce_ide_to_ode",
    "derive_ode_parameters",
    "weighted_ode_mean_stay_times",
    "ode_flows",
    "ode_force_of_infection",
    # data_init
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
    # experiments
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
