"""Shared parameter tables and fixtures.

Two standard setups recur across the suite: a small all-exponential
population of 10000 (cheap, reduces exactly to the constant-rate model)
and the realistic lognormal setup for Germany-scale runs.  Builders are
plain functions so tests can tweak single fields.
"""

from pathlib import Path

import numpy as np
import pytest

import secir_ide
from secir_ide import (
    AgeDependentFactor,
    ContactSchedule,
    ParameterSet,
    TransitionDistribution,
    TransitionId,
)

EXP_MEANS = {
    "E_C": 1.4,
    "C_I": 1.2,
    "C_R": 1.2,
    "I_H": 0.3,
    "I_R": 0.3,
    "H_U": 0.3,
    "H_R": 0.3,
    "U_D": 0.3,
    "U_R": 0.3,
}

LOGNORMAL_MOMENTS = {
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

REALISTIC_MUS = {"mu_CI": 0.793099, "mu_IH": 0.078643, "mu_HU": 0.173176, "mu_UD": 0.387803}

SMALL_Y0 = np.array([9945.0, 20.0, 20.0, 3.0, 1.0, 1.0, 10.0, 0.0])


def make_exponential_params(phi=1.0, N=10000.0, contact=None) -> ParameterSet:
    gamma = {
        TransitionId[name]: TransitionDistribution.exponential(mean)
        for name, mean in EXP_MEANS.items()
    }
    return ParameterSet(
        N=N,
        mu_CI=0.5,
        mu_IH=0.5,
        mu_HU=0.5,
        mu_UD=0.5,
        contact=contact if contact is not None else ContactSchedule.constant(phi),
        rho_C=AgeDependentFactor.constant(1.0),
        rho_I=AgeDependentFactor.constant(1.0),
        xi_C=AgeDependentFactor.constant(1.0),
        xi_I=AgeDependentFactor.constant(1.0),
        gamma=gamma,
    )


def make_realistic_params(contact=None) -> ParameterSet:
    gamma = {
        TransitionId[name]: TransitionDistribution.lognormal(mean, std)
        for name, (mean, std) in LOGNORMAL_MOMENTS.items()
    }
    return ParameterSet(
        N=83155031.0,
        contact=contact if contact is not None else ContactSchedule.constant(3.114219),
        rho_C=AgeDependentFactor.constant(0.0733271),
        rho_I=AgeDependentFactor.constant(0.0733271),
        xi_C=AgeDependentFactor.constant(1.0),
        xi_I=AgeDependentFactor.constant(0.3),
        gamma=gamma,
        **REALISTIC_MUS,
    )


@pytest.fixture(scope="session")
def exp_params():
    return make_exponential_params()


@pytest.fixture(scope="session")
def realistic_params():
    return make_realistic_params()


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return Path(secir_ide.__file__).parent / "configs"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return Path(secir_ide.__file__).parent / "data"
