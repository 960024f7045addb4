"""Nuisance-component estimation over a data prefix.

A :class:`NuisanceSet` bundles everything the influence-function evaluation
needs for one prefix of the ordered sample: exposure probabilities, per-arm
mediator means, IPCW least-squares slopes, per-mediator natural indirect
effects, a logistic reciprocal-odds fit, and risk-set conditional-mean
regressions keyed to the censoring jump times. The censoring model itself is
always the full-sample fit; the other components are refit per prefix under
the default scope.

:class:`PrefixStats` maintains the running cross-moments that make a sweep
over growing prefixes cost O(p) per added row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .censoring import CensoringModel, synthetic_responses
from .config import DEFAULT_CONFIG, AnalysisConfig
from .errors import CollinearityError, NumericError, PositivityError
from .dataset import Dataset


# ---------------------------------------------------------------------------
# evaluation context


@dataclass(frozen=True)
class EvalContext:
    """Read-only float views of an ordered sample, shared across prefixes."""

    x: np.ndarray
    delta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    z: np.ndarray | None
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.b.shape[1]


def make_context(d: Dataset, cm: CensoringModel, config: AnalysisConfig = DEFAULT_CONFIG) -> EvalContext:
    resp = synthetic_responses(d, cm, eps_survival=config.eps_censoring_survival)
    return EvalContext(
        x=d.x,
        delta=d.delta.astype(np.float64),
        a=d.a.astype(np.float64),
        b=d.b,
        z=d.z,
        y=resp.y,
    )


# ---------------------------------------------------------------------------
# elementary fits


def fit_exposure_prob(a) -> tuple[float, float]:
    """Empirical exposure probabilities (P(A=0), P(A=1)) over a prefix."""
    a = np.asarray(a, dtype=np.float64)
    p1 = float(a.mean())
    if not 0.0 < p1 < 1.0:
        raise PositivityError("prefix contains a single exposure level")
    return 1.0 - p1, p1


def fit_conditional_mediator_means(a, bk) -> tuple[float, float, float]:
    """Per-arm means of one mediator and their difference."""
    a = np.asarray(a, dtype=np.float64)
    bk = np.asarray(bk, dtype=np.float64)
    n1 = a.sum()
    n0 = a.shape[0] - n1
    if n1 == 0 or n0 == 0:
        raise PositivityError("prefix contains a single exposure level")
    m1 = float((a * bk).sum() / n1)
    m0 = float(((1.0 - a) * bk).sum() / n0)
    return m0, m1, m1 - m0


def fit_ksv_slope(a, bk, y, z=None, eps_den: float = 1e-12, mediator=None) -> float:
    """IPCW least-squares slope of the synthetic response on one mediator.

    Without confounders this is the covariance-ratio form
    [Var(A)Cov(B,Y) - Cov(A,B)Cov(A,Y)] / [Var(A)Var(B) - Cov^2(A,B)].
    With confounders it is the mediator coefficient of the least-squares fit
    of Y on (1, A, B, Z), obtained by partialling (1, A, Z) out through a
    rank-revealing solve of the normal equations.
    """
    a = np.asarray(a, dtype=np.float64)
    bk = np.asarray(bk, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z is None or np.size(z) == 0:
        va = a.var()
        vb = bk.var()
        cab = (a * bk).mean() - a.mean() * bk.mean()
        cby = (bk * y).mean() - bk.mean() * y.mean()
        cay = (a * y).mean() - a.mean() * y.mean()
        den = va * vb - cab * cab
        if den <= eps_den:
            raise CollinearityError(
                f"degenerate exposure/mediator design (mediator {mediator})", mediator=mediator
            )
        return float((va * cby - cab * cay) / den)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] != a.shape[0]:
        z = z.T
    w = np.column_stack([np.ones_like(a), a, z])
    gram = (w.T @ w) / a.shape[0]
    wy = (w.T @ y) / a.shape[0]
    wb = (w.T @ bk) / a.shape[0]
    ginv = _rank_inverse(gram)
    num = float((bk * y).mean() - wb @ (ginv @ wy))
    den = float((bk * bk).mean() - wb @ (ginv @ wb))
    if den <= eps_den:
        raise CollinearityError(
            f"mediator {mediator} is collinear with exposure/confounders", mediator=mediator
        )
    return num / den


def adjusted_exposure_shift(a, bk, z, eps_den: float = 1e-12) -> float:
    """Exposure coefficient of the mediator regressed on (1, A, Z)."""
    a = np.asarray(a, dtype=np.float64)
    bk = np.asarray(bk, dtype=np.float64)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] != a.shape[0]:
        z = z.T
    w = np.column_stack([np.ones_like(a), z])
    gram = (w.T @ w) / a.shape[0]
    wa = (w.T @ a) / a.shape[0]
    wb = (w.T @ bk) / a.shape[0]
    ginv = _rank_inverse(gram)
    den = float((a * a).mean() - wa @ (ginv @ wa))
    if den <= eps_den:
        raise CollinearityError("exposure is collinear with the confounders")
    num = float((a * bk).mean() - wa @ (ginv @ wb))
    return num / den


def _rank_inverse(gram: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """Pseudo-inverse of a small symmetric Gram matrix, dropping null directions."""
    vals, vecs = np.linalg.eigh(gram)
    tol = rcond * max(float(vals[-1]), 0.0) if vals.size else 0.0
    inv = np.where(vals > tol, 1.0 / np.where(vals > tol, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


@dataclass(frozen=True)
class LogisticFit:
    """Logistic fit of the exposure on one mediator.

    ``reciprocal_odds(u)`` returns exp(-(intercept + slope * u)), the inverse
    odds of exposure at mediator value u.
    """

    intercept: float
    slope: float
    separation: bool = False
    n_iter: int = 0

    def reciprocal_odds(self, u):
        return np.exp(-(self.intercept + self.slope * np.asarray(u, dtype=np.float64)))


def fit_reciprocal_odds(a, bk, *, max_iter: int = 50, tol: float = 1e-8,
                        ridge: float = 1e-10, clip: float = 15.0,
                        mediator=None) -> LogisticFit:
    """Maximum-likelihood logistic regression of A on (1, B_k) by IRLS.

    Starts from (logit(mean A), 0), stops when the largest coefficient change
    drops below ``tol``. A slope escaping ``clip`` is treated as separation:
    both coefficients are clipped into [-clip, clip] and flagged rather than
    raised. Running out of iterations without separation is a numeric error.
    """
    a = np.asarray(a, dtype=np.float64)
    bk = np.asarray(bk, dtype=np.float64)
    p1 = a.mean()
    if not 0.0 < p1 < 1.0:
        raise PositivityError("prefix contains a single exposure level")
    th0 = float(np.log(p1 / (1.0 - p1)))
    th1 = 0.0
    for it in range(1, max_iter + 1):
        eta = th0 + th1 * bk
        pr = expit(eta)
        wgt = pr * (1.0 - pr)
        g0 = float(np.sum(a - pr))
        g1 = float(np.sum(bk * (a - pr)))
        h00 = float(np.sum(wgt)) + ridge
        h01 = float(np.sum(wgt * bk))
        h11 = float(np.sum(wgt * bk * bk)) + ridge
        det = h00 * h11 - h01 * h01
        d0 = (h11 * g0 - h01 * g1) / det
        d1 = (h00 * g1 - h01 * g0) / det
        th0 += d0
        th1 += d1
        if abs(th1) > clip:
            return LogisticFit(
                intercept=float(np.clip(th0, -clip, clip)),
                slope=float(np.clip(th1, -clip, clip)),
                separation=True,
                n_iter=it,
            )
        if max(abs(d0), abs(d1)) < tol:
            return LogisticFit(intercept=th0, slope=th1, separation=False, n_iter=it)
    raise NumericError(
        f"logistic fit did not converge in {max_iter} iterations (mediator {mediator})",
        mediator=mediator,
    )


@dataclass(frozen=True)
class CondMeanFit:
    """Linear-in-mediator fit of the synthetic response on a risk set.

    Represents E[Y | A=a, B_k=u, X>=s] as intercept + slope * u, with the
    moments of the indicator-masked variables taken over the whole prefix.
    ``fallback`` marks a degenerate risk set replaced by the s = -inf fit.
    """

    intercept: float
    slope: float
    fallback: bool = False

    def __call__(self, u):
        return self.intercept + self.slope * np.asarray(u, dtype=np.float64)


def _masked_fit(count, mb, mbb, my, mby, eps_var) -> tuple[float, float, bool]:
    var = mbb - mb * mb
    if count < 2 or var <= eps_var:
        return my, 0.0, True
    slope = (mby - mb * my) / var
    return my - slope * mb, slope, False


def fit_conditional_mean_regression(x, a, bk, y, *, a_val: int, s: float = -np.inf,
                                    eps_var: float = 1e-12) -> CondMeanFit:
    """Fit intercept/slope of the masked regression at risk-set threshold s.

    The mask is 1(X >= s, A = a_val) and all moments are means of the masked
    variables over the whole prefix. A risk set with fewer than two members,
    or zero masked mediator variance, falls back to the s = -inf fit (which
    itself degrades to a flat fit at the masked mean when degenerate).
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    bk = np.asarray(bk, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    base_mask = a == a_val
    mask = base_mask & (x >= s)
    count = int(np.count_nonzero(mask))
    mb = float((bk * mask).sum() / n)
    mbb = float((bk * bk * mask).sum() / n)
    my = float((y * mask).sum() / n)
    mby = float((bk * y * mask).sum() / n)
    r1, r2, degenerate = _masked_fit(count, mb, mbb, my, mby, eps_var)
    if not degenerate:
        return CondMeanFit(intercept=r1, slope=r2, fallback=False)
    if np.isneginf(s):
        # degenerate even without the risk-set restriction: flat fit, flagged
        return CondMeanFit(intercept=my, slope=0.0, fallback=True)
    base = fit_conditional_mean_regression(x, a, bk, y, a_val=a_val, s=-np.inf, eps_var=eps_var)
    return CondMeanFit(intercept=base.intercept, slope=base.slope, fallback=True)


@dataclass(frozen=True)
class RiskSetCurves:
    """Conditional-mean fits at every censoring jump time, for one (arm, mediator).

    ``cum_intercept``/``cum_slope`` are running sums of the per-jump
    coefficients weighted by the hazard increments, so compensator integrals
    of the fitted line reduce to two lookups.
    """

    base: CondMeanFit
    jump_intercepts: np.ndarray
    jump_slopes: np.ndarray
    fallback: np.ndarray
    cum_intercept: np.ndarray
    cum_slope: np.ndarray


def build_risk_curves(x, a, bk, y, *, a_val: int, cm: CensoringModel,
                      eps_var: float = 1e-12) -> RiskSetCurves:
    """Fit the risk-set regressions at all censoring jump times in one pass.

    Sorts the prefix once and reads all masked moments off suffix cumulative
    sums, so the cost is O(j log j + #jumps) rather than O(j * #jumps).
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    bk = np.asarray(bk, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    base = fit_conditional_mean_regression(x, a, bk, y, a_val=a_val, s=-np.inf, eps_var=eps_var)

    order = np.argsort(x, kind="stable")
    xo = x[order]
    mask = (a[order] == a_val).astype(np.float64)
    mb = mask * bk[order]
    my = mask * y[order]

    def suffix(v):
        out = np.cumsum(v[::-1])[::-1]
        return np.append(out, 0.0)

    s_cnt = suffix(mask)
    s_b = suffix(mb)
    s_bb = suffix(mb * bk[order])
    s_y = suffix(my)
    s_by = suffix(mb * y[order])

    pos = np.searchsorted(xo, cm.jump_times, side="left")
    cnt = s_cnt[pos]
    mb_m = s_b[pos] / n
    mbb_m = s_bb[pos] / n
    my_m = s_y[pos] / n
    mby_m = s_by[pos] / n

    var = mbb_m - mb_m * mb_m
    good = (cnt >= 2) & (var > eps_var)
    safe_var = np.where(good, var, 1.0)
    slope = np.where(good, (mby_m - mb_m * my_m) / safe_var, base.slope)
    intercept = np.where(good, my_m - slope * mb_m, base.intercept)
    fallback = ~good

    cum_r1 = np.cumsum(intercept * cm.jump_sizes)
    cum_r2 = np.cumsum(slope * cm.jump_sizes)
    return RiskSetCurves(
        base=base,
        jump_intercepts=intercept,
        jump_slopes=slope,
        fallback=fallback,
        cum_intercept=cum_r1,
        cum_slope=cum_r2,
    )


# ---------------------------------------------------------------------------
# the assembled bundle


@dataclass
class NuisanceSet:
    """All nuisance components fitted on one prefix of the ordered sample.

    Immutable after assembly apart from the internal lazy caches for the
    logistic and risk-set fits, which are keyed by mediator (and arm).
    """

    n_used: int
    prob_a0: float
    prob_a1: float
    med_mean_a0: np.ndarray
    med_mean_a1: np.ndarray
    mediator_shift: np.ndarray
    outcome_slope: np.ndarray
    nie: np.ndarray
    censoring: CensoringModel
    ctx: EvalContext
    config: AnalysisConfig = DEFAULT_CONFIG
    _odds: dict = field(default_factory=dict, repr=False)
    _curves: dict = field(default_factory=dict, repr=False)
    _cond_at: dict = field(default_factory=dict, repr=False)

    @property
    def p(self) -> int:
        return self.nie.shape[0]

    def _prefix(self):
        j = self.n_used
        return self.ctx.x[:j], self.ctx.a[:j], self.ctx.y[:j]

    def odds_fit(self, k: int) -> LogisticFit:
        fit = self._odds.get(k)
        if fit is None:
            x, a, y = self._prefix()
            cfg = self.config
            fit = fit_reciprocal_odds(
                a, self.ctx.b[: self.n_used, k],
                max_iter=cfg.logistic_max_iter, tol=cfg.logistic_tol,
                ridge=cfg.logistic_ridge, clip=cfg.logistic_clip, mediator=k,
            )
            self._odds[k] = fit
        return fit

    def risk_curves(self, a_val: int, k: int) -> RiskSetCurves:
        key = (a_val, k)
        curves = self._curves.get(key)
        if curves is None:
            x, a, y = self._prefix()
            curves = build_risk_curves(
                x, a, self.ctx.b[: self.n_used, k], y,
                a_val=a_val, cm=self.censoring,
                eps_var=self.config.eps_slope_denominator,
            )
            self._curves[key] = curves
        return curves

    def cond_mean_coeffs(self, a_val: int, k: int, s: float = -np.inf) -> CondMeanFit:
        """Conditional-mean fit at an arbitrary risk-set threshold (cached)."""
        if np.isneginf(s):
            return self.risk_curves(a_val, k).base
        curves = self.risk_curves(a_val, k)
        idx = np.searchsorted(self.censoring.jump_times, s)
        if idx < curves.jump_intercepts.shape[0] and self.censoring.jump_times[idx] == s:
            return CondMeanFit(
                intercept=float(curves.jump_intercepts[idx]),
                slope=float(curves.jump_slopes[idx]),
                fallback=bool(curves.fallback[idx]),
            )
        key = (a_val, k, float(s))
        fit = self._cond_at.get(key)
        if fit is None:
            x, a, y = self._prefix()
            fit = fit_conditional_mean_regression(
                x, a, self.ctx.b[: self.n_used, k], y, a_val=a_val, s=s,
                eps_var=self.config.eps_slope_denominator,
            )
            self._cond_at[key] = fit
        return fit


def assemble_nuisance(d: Dataset, cm: CensoringModel,
                      config: AnalysisConfig = DEFAULT_CONFIG,
                      n_used: int | None = None,
                      ctx: EvalContext | None = None) -> NuisanceSet:
    """Fit the whole nuisance bundle on the first ``n_used`` rows of ``d``.

    The censoring model is taken as given (full-sample fit); the synthetic
    responses are therefore fixed across prefixes and live in the shared
    evaluation context.
    """
    if ctx is None:
        ctx = make_context(d, cm, config)
    j = ctx.n if n_used is None else int(n_used)
    if not 1 <= j <= ctx.n:
        raise ValueError(f"prefix length {j} out of range")
    a = ctx.a[:j]
    b = ctx.b[:j]
    y = ctx.y[:j]
    prob_a0, prob_a1 = fit_exposure_prob(a)
    n1 = a.sum()
    n0 = j - n1
    sum_ab = a @ b
    sum_b = b.sum(axis=0)
    mean1 = sum_ab / n1
    mean0 = (sum_b - sum_ab) / n0

    adjusted = config.adjust_for_confounders and ctx.z is not None and ctx.z.shape[1] > 0
    eps = config.eps_slope_denominator
    if adjusted:
        z = ctx.z[:j]
        slopes = _adjusted_slopes(a, b, y, z, eps)
        shifts = _adjusted_shifts(a, b, z, eps)
    else:
        slopes = _cov_ratio_slopes(a, b, y, eps)
        shifts = mean1 - mean0
    return NuisanceSet(
        n_used=j,
        prob_a0=prob_a0,
        prob_a1=prob_a1,
        med_mean_a0=mean0,
        med_mean_a1=mean1,
        mediator_shift=shifts,
        outcome_slope=slopes,
        nie=slopes * shifts,
        censoring=cm,
        ctx=ctx,
        config=config,
    )


def _cov_ratio_slopes(a, b, y, eps_den) -> np.ndarray:
    """Vectorized covariance-ratio slopes over all mediator columns."""
    j = a.shape[0]
    ma = a.mean()
    my = y.mean()
    va = a.var()
    cay = (a @ y) / j - ma * my
    mb = b.mean(axis=0)
    vb = (b * b).sum(axis=0) / j - mb * mb
    cab = (a @ b) / j - ma * mb
    cby = (y @ b) / j - mb * my
    den = va * vb - cab * cab
    bad = den <= eps_den
    if np.any(bad):
        k = int(np.argmax(bad))
        raise CollinearityError(
            f"degenerate exposure/mediator design (mediator {k})", mediator=k
        )
    return (va * cby - cab * cay) / den


def _adjusted_slopes(a, b, y, z, eps_den) -> np.ndarray:
    """Mediator coefficients of Y ~ (1, A, B_k, Z), all k, by partialling."""
    j = a.shape[0]
    w = np.column_stack([np.ones_like(a), a, z])
    gram = (w.T @ w) / j
    ginv = _rank_inverse(gram)
    wy = (w.T @ y) / j
    wb = (w.T @ b) / j                      # (d0, p)
    gy = ginv @ wy
    gb = ginv @ wb
    num = (y @ b) / j - wb.T @ gy
    den = (b * b).sum(axis=0) / j - np.einsum("ik,ik->k", wb, gb)
    bad = den <= eps_den
    if np.any(bad):
        k = int(np.argmax(bad))
        raise CollinearityError(
            f"mediator {k} is collinear with exposure/confounders", mediator=k
        )
    return num / den


def _adjusted_shifts(a, b, z, eps_den) -> np.ndarray:
    """Exposure coefficients of B_k ~ (1, A, Z), all k, by partialling."""
    j = a.shape[0]
    w = np.column_stack([np.ones_like(a), z])
    gram = (w.T @ w) / j
    ginv = _rank_inverse(gram)
    wa = (w.T @ a) / j
    wb = (w.T @ b) / j
    ga = ginv @ wa
    den = float((a @ a) / j - wa @ ga)
    if den <= eps_den:
        raise CollinearityError("exposure is collinear with the confounders")
    num = (a @ b) / j - wb.T @ ga
    return num / den


# ---------------------------------------------------------------------------
# streaming prefix moments


class PrefixStats:
    """Running cross-moments of (a, y, b, z) over a growing prefix.

    Adding one row costs O(p); snapshots reproduce the per-prefix recomputed
    exposure probabilities, mediator means, shifts, and slopes.
    """

    def __init__(self, ctx: EvalContext, config: AnalysisConfig = DEFAULT_CONFIG):
        self.ctx = ctx
        self.config = config
        p = ctx.p
        self.j = 0
        self.sa = 0.0
        self.sy = 0.0
        self.say = 0.0
        self.sb = np.zeros(p)
        self.sbb = np.zeros(p)
        self.sab = np.zeros(p)
        self.sby = np.zeros(p)
        self.adjusted = (
            config.adjust_for_confounders and ctx.z is not None and ctx.z.shape[1] > 0
        )
        if self.adjusted:
            q = ctx.z.shape[1]
            self.sz = np.zeros(q)
            self.szz = np.zeros((q, q))
            self.sza = np.zeros(q)
            self.szy = np.zeros(q)
            self.szb = np.zeros((q, p))

    def extend_to(self, j: int) -> None:
        """Absorb rows [self.j, j) of the ordered sample."""
        ctx = self.ctx
        if j < self.j or j > ctx.n:
            raise ValueError(f"cannot extend prefix from {self.j} to {j}")
        lo, hi = self.j, j
        if hi - lo > 1:
            a = ctx.a[lo:hi]
            y = ctx.y[lo:hi]
            b = ctx.b[lo:hi]
            self.sa += a.sum()
            self.sy += y.sum()
            self.say += a @ y
            self.sb += b.sum(axis=0)
            self.sbb += (b * b).sum(axis=0)
            self.sab += a @ b
            self.sby += y @ b
            if self.adjusted:
                z = ctx.z[lo:hi]
                self.sz += z.sum(axis=0)
                self.szz += z.T @ z
                self.sza += z.T @ a
                self.szy += z.T @ y
                self.szb += z.T @ b
        elif hi - lo == 1:
            i = lo
            ai = ctx.a[i]
            yi = ctx.y[i]
            bi = ctx.b[i]
            self.sa += ai
            self.sy += yi
            self.say += ai * yi
            self.sb += bi
            self.sbb += bi * bi
            self.sab += ai * bi
            self.sby += yi * bi
            if self.adjusted:
                zi = ctx.z[i]
                self.sz += zi
                self.szz += np.outer(zi, zi)
                self.sza += ai * zi
                self.szy += yi * zi
                self.szb += np.outer(zi, bi)
        self.j = j

    def exposure_prob(self) -> tuple[float, float]:
        p1 = self.sa / self.j
        if not 0.0 < p1 < 1.0:
            raise PositivityError(
                "prefix contains a single exposure level; "
                "use a different ordering or a larger burn-in"
            )
        return 1.0 - p1, p1

    def group_means(self) -> tuple[np.ndarray, np.ndarray]:
        n1 = self.sa
        n0 = self.j - self.sa
        return (self.sb - self.sab) / n0, self.sab / n1

    def shifts(self) -> np.ndarray:
        if not self.adjusted:
            m0, m1 = self.group_means()
            return m1 - m0
        j = self.j
        w_gram = np.empty((1 + self.sz.shape[0],) * 2)
        w_gram[0, 0] = j
        w_gram[0, 1:] = self.sz
        w_gram[1:, 0] = self.sz
        w_gram[1:, 1:] = self.szz
        gram = w_gram / j
        ginv = _rank_inverse(gram)
        wa = np.concatenate(([self.sa], self.sza)) / j
        wb = np.vstack([self.sb, self.szb]) / j
        ga = ginv @ wa
        den = self.sa / j - wa @ ga          # a is binary: sum a^2 = sum a
        if den <= self.config.eps_slope_denominator:
            raise CollinearityError("exposure is collinear with the confounders")
        num = self.sab / j - wb.T @ ga
        return num / den

    def slopes(self) -> np.ndarray:
        j = self.j
        eps = self.config.eps_slope_denominator
        if not self.adjusted:
            ma = self.sa / j
            my = self.sy / j
            va = ma - ma * ma                # binary exposure
            cay = self.say / j - ma * my
            mb = self.sb / j
            vb = self.sbb / j - mb * mb
            cab = self.sab / j - ma * mb
            cby = self.sby / j - mb * my
            den = va * vb - cab * cab
            bad = den <= eps
            if np.any(bad):
                k = int(np.argmax(bad))
                raise CollinearityError(
                    f"degenerate exposure/mediator design (mediator {k})", mediator=k
                )
            return (va * cby - cab * cay) / den
        q = self.sz.shape[0]
        gram = np.empty((2 + q, 2 + q))
        gram[0, 0] = j
        gram[0, 1] = gram[1, 0] = self.sa
        gram[1, 1] = self.sa
        gram[0, 2:] = gram[2:, 0] = self.sz
        gram[1, 2:] = gram[2:, 1] = self.sza
        gram[2:, 2:] = self.szz
        gram = gram / j
        ginv = _rank_inverse(gram)
        wy = np.concatenate(([self.sy], [self.say], self.szy)) / j
        wb = np.vstack([self.sb, self.sab, self.szb]) / j
        gy = ginv @ wy
        gb = ginv @ wb
        num = self.sby / j - wb.T @ gy
        den = self.sbb / j - np.einsum("ik,ik->k", wb, gb)
        bad = den <= eps
        if np.any(bad):
            k = int(np.argmax(bad))
            raise CollinearityError(
                f"mediator {k} is collinear with exposure/confounders", mediator=k
            )
        return num / den

    def snapshot(self, cm: CensoringModel) -> NuisanceSet:
        """Materialize the nuisance bundle for the current prefix length."""
        prob_a0, prob_a1 = self.exposure_prob()
        mean0, mean1 = self.group_means()
        shifts = self.shifts()
        slopes = self.slopes()
        return NuisanceSet(
            n_used=self.j,
            prob_a0=prob_a0,
            prob_a1=prob_a1,
            med_mean_a0=mean0,
            med_mean_a1=mean1,
            mediator_shift=shifts,
            outcome_slope=slopes,
            nie=slopes * shifts,
            censoring=cm,
            ctx=self.ctx,
            config=self.config,
        )
