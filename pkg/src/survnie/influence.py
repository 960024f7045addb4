"""Efficient influence function of the per-mediator natural indirect effect.

The influence function splits into a base term (valid when the censoring
distribution is known) minus a correction obtained by projecting onto the
coarsening-at-random tangent space; the correction integrates risk-set
conditional means against the censoring martingale. Scalar entry points
mirror the vectorized kernels used by the prefix sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .censoring import martingale_integral
from .dataset import Dataset, Observation
from .nuisance import NuisanceSet


@dataclass(frozen=True)
class InfluenceValue:
    """One evaluation: base term, CAR correction, and their difference."""

    base: float
    car_correction: float
    efficient: float


@dataclass(frozen=True)
class OneStepEstimate:
    """Plug-in estimate plus the empirical mean of the influence values."""

    k: int
    plugin: float
    correction: float
    estimate: float
    influence_sd: float
    n_eval: int


def _synthetic_response(obs: Observation, ns: NuisanceSet) -> float:
    if obs.delta == 0:
        return 0.0
    g_left = float(ns.censoring.survival_before(obs.x))
    eps = ns.config.eps_censoring_survival
    return obs.x / max(g_left, eps)


def influence_base(obs: Observation, ns: NuisanceSet, k: int) -> float:
    """Influence term computed as if the censoring distribution were known."""
    bk = float(obs.b[k])
    fitted = ns.cond_mean_coeffs(1, k)
    e_hat = float(fitted(bk))
    slope = float(ns.outcome_slope[k])
    if obs.a == 0:
        return -(e_hat - slope * float(ns.med_mean_a0[k])) / ns.prob_a0
    y = _synthetic_response(obs, ns)
    recip = float(ns.odds_fit(k).reciprocal_odds(bk))
    inner = y - slope * float(ns.med_mean_a1[k]) \
        - recip * (ns.prob_a1 / ns.prob_a0) * (y - e_hat)
    return inner / ns.prob_a1


def influence_car_correction(obs: Observation, ns: NuisanceSet, k: int) -> float:
    """Projection of the base term onto the censoring tangent space.

    Zero for unexposed records; otherwise the martingale integral of the
    risk-set conditional-mean line at the observation's mediator value,
    scaled by the exposure-odds prefactor.
    """
    if obs.a == 0:
        return 0.0
    bk = float(obs.b[k])
    recip = float(ns.odds_fit(k).reciprocal_odds(bk))
    prefactor = -(1.0 - recip * ns.prob_a1 / ns.prob_a0) / ns.prob_a1

    def integrand(s: float) -> float:
        return float(ns.cond_mean_coeffs(obs.a, k, s)(bk))

    return prefactor * martingale_integral(obs, integrand, ns.censoring)


def efficient_influence(obs: Observation, ns: NuisanceSet, k: int) -> InfluenceValue:
    base = influence_base(obs, ns, k)
    car = influence_car_correction(obs, ns, k)
    return InfluenceValue(base=base, car_correction=car, efficient=base - car)


def influence_vector(ns: NuisanceSet, k: int, upto: int | None = None,
                     with_parts: bool = False):
    """Efficient influence values for the first ``upto`` rows of the sample.

    Vectorized counterpart of :func:`efficient_influence`; censored rows must
    have their times among the censoring model's jump times (always true when
    the model was fit on the sample that contains them).
    """
    ctx = ns.ctx
    n = ctx.n if upto is None else int(upto)
    x = ctx.x[:n]
    d = ctx.delta[:n]
    a = ctx.a[:n]
    bk = ctx.b[:n, k]
    y = ctx.y[:n]

    fitted = ns.cond_mean_coeffs(1, k)
    e_hat = fitted.intercept + fitted.slope * bk
    slope = float(ns.outcome_slope[k])
    recip = ns.odds_fit(k).reciprocal_odds(bk)
    p0, p1 = ns.prob_a0, ns.prob_a1

    base = np.where(
        a == 0.0,
        -(e_hat - slope * float(ns.med_mean_a0[k])) / p0,
        (y - slope * float(ns.med_mean_a1[k]) - recip * (p1 / p0) * (y - e_hat)) / p1,
    )

    cm = ns.censoring
    m = cm.jump_times.shape[0]
    if m == 0:
        car = np.zeros(n)
    else:
        curves = ns.risk_curves(1, k)
        upto_jump = np.searchsorted(cm.jump_times, x, side="right")
        pad_r1 = np.concatenate(([0.0], curves.cum_intercept))
        pad_r2 = np.concatenate(([0.0], curves.cum_slope))
        compensator = pad_r1[upto_jump] + pad_r2[upto_jump] * bk
        own = np.minimum(np.searchsorted(cm.jump_times, x, side="left"), m - 1)
        g_own = curves.jump_intercepts[own] + curves.jump_slopes[own] * bk
        integral = (1.0 - d) * g_own - compensator
        car = np.where(a == 1.0, -(1.0 - recip * p1 / p0) / p1 * integral, 0.0)

    efficient = base - car
    if with_parts:
        return efficient, base, car
    return efficient


def one_step(d: Dataset, ns: NuisanceSet, k: int) -> OneStepEstimate:
    """Plug-in NIE for mediator k plus the mean influence correction over d."""
    if d.n != ns.ctx.n:
        raise ValueError("dataset does not match the nuisance evaluation context")
    values = influence_vector(ns, k)
    plugin = float(ns.nie[k])
    correction = float(values.mean())
    sd = float(np.sqrt(np.mean((values - correction) ** 2)))
    return OneStepEstimate(
        k=k,
        plugin=plugin,
        correction=correction,
        estimate=plugin + correction,
        influence_sd=sd,
        n_eval=values.shape[0],
    )
