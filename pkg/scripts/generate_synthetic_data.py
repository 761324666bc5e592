#!/usr/bin/env python3
"""Regenerate the bundled synthetic surveillance tables.

Runs the flow model forward from a constant-flow past (gentle growth, one
contact reduction mid-run) and writes the reporting tables a surveillance
system would have produced: daily cumulative confirmed cases, cumulative
deaths dated as they would be reported, and intensive-care occupancy.

The tables start at 2020-09-01 while the bundled scenario config
re-initializes from 2020-10-01, so the reconstruction happens a month into
the recorded outbreak — exactly the situation the data-driven
initialization is for.  The run is deterministic; re-running this script
must reproduce the committed CSV files byte for byte.
"""

from __future__ import annotations

import argparse
from datetime import date
from pathlib import Path

from secir_ide import (
    ContactSchedule,
    ParameterSet,
    AgeDependentFactor,
    TransitionDistribution,
    generate_synthetic_outbreak,
    save_case_data,
)

DT = 0.01
LEVEL = 3200.0  # starting new transmissions per day
T0_DATE = date(2020, 9, 1)
T_END_DAYS = 100
N_TABLE_DAYS = 81

LOGNORMALS = {
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


def build_parameters() -> ParameterSet:
    from secir_ide import TransitionId

    gamma = {
        TransitionId[name]: TransitionDistribution.lognormal(mean, std)
        for name, (mean, std) in LOGNORMALS.items()
    }
    return ParameterSet(
        N=83155031.0,
        mu_CI=0.793099,
        mu_IH=0.078643,
        mu_HU=0.173176,
        mu_UD=0.387803,
        contact=ContactSchedule(((0.0, 3.6), (53.0, 2.5))),
        rho_C=AgeDependentFactor.constant(0.0733271),
        rho_I=AgeDependentFactor.constant(0.0733271),
        xi_C=AgeDependentFactor.constant(1.0),
        xi_I=AgeDependentFactor.constant(0.3),
        gamma=gamma,
    )


def main() -> None:
    default_out = Path(__file__).resolve().parent.parent / "src" / "secir_ide" / "data"
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path, default=default_out)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    params = build_parameters()
    result, table = generate_synthetic_outbreak(params, DT, LEVEL, T0_DATE, T_END_DAYS, N_TABLE_DAYS)

    cases = args.out_dir / "synthetic_cases.csv"
    icu = args.out_dir / "synthetic_icu.csv"
    save_case_data(table, cases, icu)
    print(f"wrote {cases} ({len(table.dates)} days, "
          f"{table.cumulative_confirmed[-1]:.0f} confirmed, "
          f"{table.cumulative_deaths[-1]:.1f} deaths)")
    print(f"wrote {icu} (occupancy {table.icu_occupancy.min():.1f}..{table.icu_occupancy.max():.1f})")
    print(f"run: {result.grid.n_max} steps, max mass residual {result.max_mass_residual:.3e}")


if __name__ == "__main__":
    main()
