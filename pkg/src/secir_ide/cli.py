"""Command-line entry point: config parsing, experiment dispatch, file I/O.

Configs are single JSON files mirroring the construction arguments of
:class:`~secir_ide.core.ParameterSet` (see the bundled files under
``secir_ide/configs/``).  Relative input paths inside a config resolve
against the config file's directory, so the bundled configs work from any
working directory.  Command-line overrides exist for ``dt`` and ``t_end``
only; everything else is config-driven so that a config file fully
determines the outputs (identical config, identical bytes).
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Mapping
from datetime import date
from pathlib import Path

import numpy as np

from .core import (
    DISTRIBUTED_TRANSITIONS,
    AgeDependentFactor,
    CompartmentState,
    ContactSchedule,
    InfectionState,
    ParameterSet,
    TransitionId,
)
from .data_init import build_initial_history, load_case_data
from .distributions import distribution_from_config
from .experiments import (
    changepoint_experiment,
    constant_flow_history,
    convergence_study,
    flow_label,
    scenario_run,
    stationary_history,
)
from .ode import (
    derive_ode_parameters,
    ode_flows,
    ode_force_of_infection,
    rk_integrate,
)
from .solver import build_solver_state, simulate

__all__ = ["CSV_HEADER", "EXPERIMENTS", "main", "parameters_from_config", "write_run_csv"]

EXPERIMENTS = ("simulate-ide", "simulate-ode", "convergence", "changepoint", "scenario")

CSV_HEADER = "t,S,E,C,I,H,U,R,D,lambda," + ",".join(flow_label(t) for t in TransitionId)

_DIRECTION_FACTORS = {"double": 2.0, "halve": 0.5, "none": 1.0}

_DEFAULT_DTS = (1e-1, 5e-2, 1e-2, 5e-3, 1e-3)


class ConfigError(ValueError):
    """A config file is missing a field or holds an unusable value."""


def _field(cfg: Mapping, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"missing {where} field {key!r}")
    return cfg[key]


def _factor_from(value, name: str) -> AgeDependentFactor:
    if isinstance(value, Mapping):
        return AgeDependentFactor.tabulated(
            [float(v) for v in _field(value, "taus", name)],
            [float(v) for v in _field(value, "values", name)],
        )
    return AgeDependentFactor.constant(float(value))


def parameters_from_config(block: Mapping) -> ParameterSet:
    """Build a ParameterSet from the ``parameters`` block of a config file."""
    contact = ContactSchedule(
        tuple((float(t), float(r)) for t, r in _field(block, "contact", "parameter"))
    )
    dists = _field(block, "distributions", "parameter")
    gamma = {}
    for t in DISTRIBUTED_TRANSITIONS:
        if t.name not in dists:
            raise ConfigError(f"missing parameter field distributions.{t.name}")
        gamma[t] = distribution_from_config(dists[t.name])
    if "rho" in block:
        rho_c = rho_i = _factor_from(block["rho"], "rho")
    else:
        rho_c = _factor_from(_field(block, "rho_C", "parameter"), "rho_C")
        rho_i = _factor_from(_field(block, "rho_I", "parameter"), "rho_I")
    return ParameterSet(
        N=float(_field(block, "N", "parameter")),
        mu_CI=float(_field(block, "mu_CI", "parameter")),
        mu_IH=float(_field(block, "mu_IH", "parameter")),
        mu_HU=float(_field(block, "mu_HU", "parameter")),
        mu_UD=float(_field(block, "mu_UD", "parameter")),
        contact=contact,
        rho_C=rho_c,
        rho_I=rho_i,
        xi_C=_factor_from(_field(block, "xi_C", "parameter"), "xi_C"),
        xi_I=_factor_from(_field(block, "xi_I", "parameter"), "xi_I"),
        gamma=gamma,
    )


def _compartments_from(block: Mapping) -> CompartmentState:
    values = {}
    for state in InfectionState:
        if state.name not in block:
            raise ConfigError(f"missing compartments_at_0 field {state.name!r}")
        values[state] = float(block[state.name])
    extra = sorted(set(block) - {s.name for s in InfectionState})
    if extra:
        raise ConfigError(f"unknown compartments_at_0 field {extra[0]!r}")
    return CompartmentState.from_mapping(values)


def _resolve(config_dir: Path, value) -> Path:
    path = Path(str(value))
    return path if path.is_absolute() else config_dir / path


def _load_reported(block: Mapping, where: str, config_dir: Path):
    cases = _resolve(config_dir, _field(block, "cases", where))
    icu = block.get("icu")
    return load_case_data(cases, _resolve(config_dir, icu) if icu is not None else None)


def _initial_state(cfg: Mapping, params: ParameterSet, dt: float, config_dir: Path):
    init = _field(cfg, "init")
    kind = _field(init, "kind", "init")
    if kind == "stationary":
        hist, comp0, _ = stationary_history(params, dt)
        return hist, comp0
    if kind == "constant-flows":
        return constant_flow_history(params, dt, float(_field(init, "level", "init")))
    if kind == "case-data":
        data = _load_reported(init, "init", config_dir)
        t0 = date.fromisoformat(str(_field(init, "t0_date", "init")))
        return build_initial_history(data, params, dt, t0, float(init.get("detection_ratio", 1.0)))
    raise ConfigError(f"unknown init kind {kind!r}")


def write_run_csv(path: Path, times, compartments, lam, flows: Mapping[TransitionId, np.ndarray]) -> None:
    """One row per grid point: t, compartments, lambda, all ten flows.

    Values are written with 17 significant digits so doubles round-trip
    exactly; the decimal separator is always ``.``.
    """
    cols = [np.asarray(times, dtype=float)]
    cols += [np.asarray(compartments, dtype=float)[:, s] for s in InfectionState]
    cols.append(np.asarray(lam, dtype=float))
    cols += [np.asarray(flows[t], dtype=float) for t in TransitionId]
    n = cols[0].size
    if any(c.shape != (n,) for c in cols):
        raise ValueError("output series are not aligned on one grid")
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for i in range(n):
            fh.write(",".join(format(c[i], ".17g") for c in cols) + "\n")


def _write_comparison_csv(path: Path, comparison: Mapping[str, np.ndarray]) -> None:
    keys = ("day", "daily_new_transmissions", "infectious", "deaths")
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(keys) + "\n")
        for i in range(comparison["day"].size):
            fh.write(",".join(format(comparison[k][i], ".17g") for k in keys) + "\n")


def _ide_columns(result):
    flows = {t: result.flow_series(t) for t in TransitionId}
    return result.times, result.compartments, result.force_of_infection, flows


def _ode_columns(ode_p, ode):
    lam = ode_force_of_infection(ode_p, ode.times, ode.compartments)
    flows = ode_flows(ode_p, ode.times, ode.compartments)
    return ode.times, ode.compartments, lam, flows


def _totals(compartments: np.ndarray) -> str:
    final = compartments[-1]
    return " ".join(f"{s.name}={final[s]:.6g}" for s in InfectionState)


def _run(args, cfg: Mapping, config_dir: Path) -> None:
    out_dir = Path(args.out) if args.out is not None else Path(cfg.get("output_dir", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    params = parameters_from_config(_field(cfg, "parameters"))
    experiment = args.experiment

    if experiment == "convergence":
        if args.dt is not None or args.t_end is not None:
            raise ConfigError("--dt/--t-end do not apply to the convergence sweep")
        _run_convergence(args, cfg, params, out_dir)
        return

    dt = float(args.dt) if args.dt is not None else float(_field(cfg, "dt"))
    t_end = float(args.t_end) if args.t_end is not None else float(_field(cfg, "t_end"))

    if experiment == "simulate-ide":
        hist, comp0 = _initial_state(cfg, params, dt, config_dir)
        result = simulate(build_solver_state(params, hist, comp0), t_end)
        write_run_csv(out_dir / "simulate_ide.csv", *_ide_columns(result))
        if not args.no_figures:
            from . import figures

            times, comp, _, flows = _ide_columns(result)
            figures.render_compartments(times, comp, out_dir / "simulate_ide_compartments.png")
            figures.render_flows(times, flows, out_dir / "simulate_ide_flows.png")
        print(
            f"simulate-ide: {result.grid.n_max} steps | final {_totals(result.compartments)}"
            f" | max residual {result.max_mass_residual:.3e}"
        )

    elif experiment == "simulate-ode":
        ode_p = derive_ode_parameters(params)
        y0 = _compartments_from(_field(cfg, "compartments_at_0"))
        ode = rk_integrate(ode_p, y0.counts, (0.0, t_end), dt)
        write_run_csv(out_dir / "simulate_ode.csv", *_ode_columns(ode_p, ode))
        if not args.no_figures:
            from . import figures

            times, comp, _, flows = _ode_columns(ode_p, ode)
            figures.render_compartments(times, comp, out_dir / "simulate_ode_compartments.png")
            figures.render_flows(times, flows, out_dir / "simulate_ode_flows.png")
        residual = float(np.max(np.abs(ode.compartments.sum(axis=1) - ode_p.N)))
        print(
            f"simulate-ode: {ode.times.size - 1} records | final {_totals(ode.compartments)}"
            f" | max residual {residual:.3e}"
        )

    elif experiment == "changepoint":
        block = cfg.get("changepoint", {})
        direction = str(block.get("direction", "double"))
        if direction not in _DIRECTION_FACTORS:
            raise ConfigError(f"unknown changepoint direction {direction!r}")
        result = changepoint_experiment(
            params, dt, float(block.get("t_change", 2.0)), t_end, _DIRECTION_FACTORS[direction]
        )
        write_run_csv(out_dir / "changepoint_ide.csv", *_ide_columns(result.ide))
        write_run_csv(out_dir / "changepoint_ode.csv", *_ode_columns(result.ode_params, result.ode))
        if not args.no_figures:
            from . import figures

            figures.render_changepoint(result, out_dir / "changepoint.png")
        print(
            f"changepoint ({direction}): jump ide={result.ide_jump:.4f} ode={result.ode_jump:.4f}"
            f" plateau ide={result.ide_plateau_dev:.2e} ode={result.ode_plateau_dev:.2e}"
            f" | final {_totals(result.ide.compartments)}"
            f" | max residual {result.ide.max_mass_residual:.3e}"
        )

    elif experiment == "scenario":
        block = _field(cfg, "scenario")
        data = _load_reported(block, "scenario", config_dir)
        t0 = date.fromisoformat(str(_field(block, "t0_date", "scenario")))
        result = scenario_run(data, params, dt, t0, t_end, float(block.get("detection_ratio", 1.0)))
        write_run_csv(out_dir / "scenario_ide.csv", *_ide_columns(result.ide))
        write_run_csv(out_dir / "scenario_ode.csv", *_ode_columns(result.ode_params, result.ode))
        _write_comparison_csv(out_dir / "scenario_comparison.csv", result.comparison)
        if not args.no_figures:
            from . import figures

            figures.render_scenario(result, out_dir / "scenario.png")
        print(
            f"scenario from {t0.isoformat()}: {result.ide.grid.n_max} steps"
            f" | final {_totals(result.ide.compartments)}"
            f" | max residual {result.ide.max_mass_residual:.3e}"
        )

    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError(f"unknown experiment {experiment!r}")


def _run_convergence(args, cfg: Mapping, params: ParameterSet, out_dir: Path) -> None:
    block = cfg.get("convergence", {})
    y0 = _compartments_from(_field(cfg, "compartments_at_0"))
    dts = [float(v) for v in block.get("dts", _DEFAULT_DTS)]
    spin = float(block.get("spin_days", 35.0))
    compare = float(block.get("compare_days", 35.0))
    dt_reference = float(block.get("dt_reference", 1e-5))
    record_dt = float(block.get("record_dt", 1e-3))
    study = convergence_study(params, y0.counts, dts, spin, compare, dt_reference, record_dt)
    report = {
        "dts": [float(v) for v in study.dts],
        "window_days": [spin, spin + compare],
        "ground_truth_dt": dt_reference,
        "quantities": {
            label: {
                "errors": [float(v) for v in study.errors[label]],
                "slope": float(study.slopes[label]),
            }
            for label in study.labels
        },
    }
    path = out_dir / "convergence_report.json"
    with open(path, "w", encoding="ascii", newline="") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not args.no_figures:
        from . import figures

        figures.render_convergence(study, out_dir / "convergence.png")
    slopes = [study.slopes[label] for label in study.labels]
    print(
        f"convergence: {len(slopes)} quantities, slopes in"
        f" [{min(slopes):.3f}, {max(slopes):.3f}] | report {path}"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secir-ide",
        description=(
            "SECIR-type epidemic model driven by transition flows with arbitrary "
            "stay-time distributions, plus its reduced constant-rate twin."
        ),
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="which run to execute")
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--dt", type=float, default=None, help="override the config time step")
    parser.add_argument("--t-end", type=float, default=None, dest="t_end",
                        help="override the simulated days")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--no-figures", action="store_true",
                        help="write only delimited output, no PNG figures")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    config_path = Path(args.config)
    try:
        cfg = json.loads(config_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"error: input file not found: {config_path}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: config {config_path} is not valid JSON: {exc}", file=sys.stderr)
        return 1
    if not isinstance(cfg, Mapping):
        print(f"error: config {config_path} must hold a JSON object", file=sys.stderr)
        return 1
    try:
        _run(args, cfg, config_path.resolve().parent)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
