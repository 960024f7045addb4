"""Censoring-distribution estimation and martingale-increment integrals.

The product-limit survival of the *censoring* time (treating censorings as
the events of interest) yields the inverse-probability weights behind the
synthetic responses; the matching Nelson-Aalen cumulative hazard drives the
compensator part of the martingale integrals. At tied event/censoring times,
events are ranked before censorings: the censoring risk set at s is
{i : x_i >= s}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError


def _as_time_event(data, delta=None):
    if delta is None:
        return np.asarray(data.x, dtype=np.float64), np.asarray(data.delta)
    return np.asarray(data, dtype=np.float64), np.asarray(delta)


@dataclass(frozen=True)
class CensoringModel:
    """Step-function estimates of the censoring survival and cumulative hazard."""

    jump_times: np.ndarray      # sorted distinct censored times
    jump_sizes: np.ndarray      # hazard increment at each jump: d_m / #at-risk
    survival_after: np.ndarray  # survival value at/after each jump (right-continuous)
    cum_hazard: np.ndarray      # cumulative hazard through each jump
    tau: float                  # end of follow-up: max observed time
    n_fit: int

    def survival(self, s) -> np.ndarray:
        """Right-continuous survival of censoring at `s`."""
        idx = np.searchsorted(self.jump_times, s, side="right")
        padded = np.concatenate(([1.0], self.survival_after))
        return padded[idx]

    def survival_before(self, s) -> np.ndarray:
        """Left limit of the survival at `s` (jumps strictly below s count)."""
        idx = np.searchsorted(self.jump_times, s, side="left")
        padded = np.concatenate(([1.0], self.survival_after))
        return padded[idx]

    def hazard_through(self, s) -> np.ndarray:
        """Cumulative hazard mass at jump times <= s."""
        idx = np.searchsorted(self.jump_times, s, side="right")
        padded = np.concatenate(([0.0], self.cum_hazard))
        return padded[idx]


@dataclass(frozen=True)
class SyntheticResponses:
    """Inverse-probability-weighted responses: y_i = delta_i * x_i / G(x_i-)."""

    y: np.ndarray
    n_truncated: int = 0


def fit_censoring_km(data, delta=None) -> CensoringModel:
    """Fit the censoring survival (product-limit) and hazard (Nelson-Aalen).

    Accepts a Dataset or a pair of arrays (times, event indicators). Ties
    among censored times are aggregated into a single jump.
    """
    x, d = _as_time_event(data, delta)
    n = x.shape[0]
    if n == 0:
        raise ValidationError("cannot fit a censoring model on an empty sample")
    xs = np.sort(x)
    censored = x[d == 0]
    times, counts = np.unique(censored, return_counts=True)
    at_risk = n - np.searchsorted(xs, times, side="left")
    steps = counts / at_risk
    survival = np.cumprod(1.0 - steps)
    for arr in (times, steps, survival):
        arr.setflags(write=False)
    cum = np.cumsum(steps)
    cum.setflags(write=False)
    return CensoringModel(
        jump_times=times,
        jump_sizes=steps,
        survival_after=survival,
        cum_hazard=cum,
        tau=float(xs[-1]),
        n_fit=n,
    )


def synthetic_responses(data, cm: CensoringModel, eps_survival: float = 1e-6,
                        delta=None) -> SyntheticResponses:
    """Compute y_i = delta_i * x_i / G(x_i-), evaluating G by its left limit.

    An event whose pre-jump censoring survival has collapsed below
    ``eps_survival`` gets its weight truncated at 1/eps_survival; a warning
    reports how many responses were truncated.
    """
    x, d = _as_time_event(data, delta)
    g_left = cm.survival_before(x)
    events = d == 1
    starved = events & (g_left < eps_survival)
    n_trunc = int(np.count_nonzero(starved))
    if n_trunc:
        warnings.warn(
            f"censoring survival below {eps_survival:g} at {n_trunc} event time(s); "
            "weights truncated",
            RuntimeWarning,
            stacklevel=2,
        )
    weight = 1.0 / np.maximum(g_left, eps_survival)
    y = np.where(events, x * weight, 0.0)
    y.setflags(write=False)
    return SyntheticResponses(y=y, n_truncated=n_trunc)


def martingale_integral(obs, integrand: Callable[[float], float], cm: CensoringModel) -> float:
    """Integrate a step-evaluable function against the censoring martingale.

    Returns (1 - delta) * g(x) minus the compensator sum of g over the hazard
    jumps at or below x (the at-risk indicator includes s = x).
    """
    x = float(obs.x)
    d = int(obs.delta)
    total = 0.0 if d == 1 else float(integrand(x))
    upto = np.searchsorted(cm.jump_times, x, side="right")
    for m in range(upto):
        total -= float(integrand(float(cm.jump_times[m]))) * float(cm.jump_sizes[m])
    return total
