"""Stay-time survival functions and their discrete kernels.

Each distributed transition carries a survival function gamma(tau): the
expected proportion of individuals still in the source compartment tau
days after entry, conditioned on the destination.  This module provides
the supported families, moment conversions, truncated supports, and the
backwards-difference kernels used by all flow convolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.special import erfc

__all__ = [
    "TransitionDistribution",
    "lognormal_underlying_params",
    "truncated_support",
    "support_steps",
    "survival_on_grid",
    "backwards_difference_kernel",
    "distribution_from_config",
    "distribution_to_config",
]

_SQRT2 = math.sqrt(2.0)

#: Default truncation threshold: far below every simulation tolerance.
DEFAULT_EPSILON = 1e-10


def lognormal_underlying_params(mean: float, std: float) -> tuple[float, float]:
    """Underlying-normal (mu, sigma) of a lognormal with given mean/std.

    The returned parameters satisfy mu = ln(mean^2 / sqrt(mean^2 + std^2))
    and sigma = sqrt(ln(1 + std^2/mean^2)), so the lognormal variable
    exp(Normal(mu, sigma)) has exactly the requested first two moments.
    """
    if not (mean > 0.0 and std > 0.0):
        raise ValueError("lognormal mean and std must be positive")
    m2 = mean * mean
    mu = math.log(m2 / math.sqrt(m2 + std * std))
    sigma = math.sqrt(math.log(1.0 + (std * std) / m2))
    return mu, sigma


@dataclass(frozen=True)
class TransitionDistribution:
    """A stay-time distribution given by its survival function gamma.

    gamma(tau) = 1 for tau <= 0, is monotonically nonincreasing, and has
    a finite positive mean.  Supported families:

    - ``exponential`` (params: mean): gamma(tau) = exp(-tau/mean)
    - ``lognormal`` (params: mean, std of the stay time itself): survival
      evaluated through the complementary error function of the
      moment-matched underlying normal
    - ``smoother-cosine`` (params: bound): gamma(tau) =
      (1 + cos(pi*tau/bound))/2 on [0, bound], zero beyond; a smooth
      finite-support family used for scheme tests

    ``epsilon`` is the truncation threshold: numerically, gamma is only
    evaluated on (0, q) where q is the truncated support with
    survival(q) <= epsilon (see :func:`truncated_support`).
    """

    family: str
    params: tuple[float, ...]
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if self.family not in ("exponential", "lognormal", "smoother-cosine"):
            raise ValueError(f"unknown distribution family {self.family!r}")
        if not all(math.isfinite(p) and p > 0.0 for p in self.params):
            raise ValueError("distribution parameters must be positive and finite")
        n_expected = 2 if self.family == "lognormal" else 1
        if len(self.params) != n_expected:
            raise ValueError(f"{self.family} takes {n_expected} parameter(s)")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")

    @classmethod
    def exponential(cls, mean: float, epsilon: float = DEFAULT_EPSILON) -> "TransitionDistribution":
        return cls("exponential", (float(mean),), epsilon)

    @classmethod
    def lognormal(cls, mean: float, std: float, epsilon: float = DEFAULT_EPSILON) -> "TransitionDistribution":
        return cls("lognormal", (float(mean), float(std)), epsilon)

    @classmethod
    def smoother_cosine(cls, bound: float, epsilon: float = DEFAULT_EPSILON) -> "TransitionDistribution":
        return cls("smoother-cosine", (float(bound),), epsilon)

    def survival(self, tau: float | np.ndarray) -> float | np.ndarray:
        """gamma(tau); exactly 1 for tau <= 0."""
        t = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.ones_like(t)
        pos = t > 0.0
        if self.family == "exponential":
            out[pos] = np.exp(-t[pos] / self.params[0])
        elif self.family == "lognormal":
            mu, sigma = lognormal_underlying_params(*self.params)
            out[pos] = 0.5 * erfc((np.log(t[pos]) - mu) / (sigma * _SQRT2))
        else:
            b = self.params[0]
            inside = pos & (t < b)
            out[inside] = 0.5 * (1.0 + np.cos(np.pi * t[inside] / b))
            out[t >= b] = 0.0
        if np.ndim(tau):
            return out.reshape(np.shape(tau))
        return float(out[0])

    def mean_stay_time(self) -> float:
        """Expected stay in days, the integral of gamma over [0, inf).

        Exponential and lognormal are parameterized by their mean, so it
        is returned exactly; test families are integrated numerically by
        the trapezoid rule over the truncated support.
        """
        if self.family in ("exponential", "lognormal"):
            return self.params[0]
        q = _continuous_support(self, self.epsilon)
        taus = np.linspace(0.0, q, (1 << 14) + 1)
        return float(np.trapezoid(self.survival(taus), taus))


def _continuous_support(d: TransitionDistribution, eps: float) -> float:
    """Smallest tau with survival(tau) <= eps, by doubling then bisection."""
    hi = 1.0
    doublings = 0
    while d.survival(hi) > eps:
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise ValueError("survival does not fall below epsilon (infinite support?)")
    lo = 0.0 if hi == 1.0 else hi / 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if d.survival(mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


def truncated_support(d: TransitionDistribution, dt: float, epsilon: float | None = None) -> float:
    """Smallest grid-aligned q (a positive multiple of dt) with survival(q) <= epsilon."""
    eps = d.epsilon if epsilon is None else epsilon
    if not (0.0 < eps < 1.0):
        raise ValueError("epsilon must lie in (0, 1)")
    q_cont = _continuous_support(d, eps)
    k = max(1, math.ceil(q_cont / dt - 1e-12))
    # The bisection bound can overshoot by a grid cell; walk back to the
    # smallest multiple that still satisfies the threshold.
    while k > 1 and d.survival((k - 1) * dt) <= eps:
        k -= 1
    return k * dt


def support_steps(d: TransitionDistribution, dt: float) -> int:
    """Truncated support expressed in grid steps: q/dt as an integer."""
    return round(truncated_support(d, dt) / dt)


@lru_cache(maxsize=None)
def survival_on_grid(d: TransitionDistribution, dt: float) -> np.ndarray:
    """gamma evaluated at t_0 .. t_K where K = support_steps(d, dt); immutable."""
    k = support_steps(d, dt)
    vals = np.asarray(d.survival(np.arange(k + 1) * dt), dtype=float)
    vals.flags.writeable = False
    return vals


@lru_cache(maxsize=None)
def backwards_difference_kernel(d: TransitionDistribution, dt: float) -> np.ndarray:
    """Discrete derivative (gamma(t_{i+1}) - gamma(t_i))/dt for i = 0..K.

    Entry i approximates gamma'(t_{i+1}).  All entries are <= 0; the final
    entry (index K = support_steps) lies beyond the truncated support and
    is exactly 0.  The array is cached per (distribution, dt) so the inner
    convolution loops never re-evaluate transcendental functions.
    """
    surv = survival_on_grid(d, dt)
    kern = np.minimum(np.diff(surv), 0.0) / dt
    kern = np.append(kern, 0.0)
    kern.flags.writeable = False
    return kern


def distribution_from_config(spec: Mapping) -> TransitionDistribution:
    """Parse {"family": ..., "mean": ..., ...} into a TransitionDistribution."""
    family = spec["family"]
    eps = float(spec.get("epsilon", DEFAULT_EPSILON))
    if family == "exponential":
        return TransitionDistribution.exponential(float(spec["mean"]), eps)
    if family == "lognormal":
        return TransitionDistribution.lognormal(float(spec["mean"]), float(spec["std"]), eps)
    if family == "smoother-cosine":
        return TransitionDistribution.smoother_cosine(float(spec["bound"]), eps)
    raise ValueError(f"unknown distribution family {family!r}")


def distribution_to_config(d: TransitionDistribution) -> dict:
    out: dict = {"family": d.family}
    if d.family == "exponential":
        out["mean"] = d.params[0]
    elif d.family == "lognormal":
        out["mean"], out["std"] = d.params
    else:
        out["bound"] = d.params[0]
    if d.epsilon != DEFAULT_EPSILON:
        out["epsilon"] = d.epsilon
    return out
