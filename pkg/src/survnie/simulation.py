"""Synthetic data generation and Monte Carlo coverage studies.

Six data-generating scenarios are supported: a global null (M0), a single
active mediator (M1), ten active mediators (M2), and primed variants
(M0p/M1p/M2p) that add an independent binary confounder to the outcome.
Censoring times are the log of an exponential variable whose rate is
calibrated by bisection to a target censoring fraction.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import multiprocessing
import os

import numpy as np
from scipy.special import ndtri

from .competing import bonferroni_one_step, oracle_one_step
from .config import DEFAULT_CONFIG, AnalysisConfig
from .dataset import Dataset, random_ordering, standardize_mediators
from .errors import CalibrationError, SurvnieError, ValidationError
from .stabilized import stabilized_one_step

MODELS = ("M0", "M1", "M2", "M0p", "M1p", "M2p")
DEFAULT_Z_COEF = -0.1

# fixed seed for the calibration draws, so a generated dataset is a pure
# function of (spec, seed)
CALIBRATION_SEED = 20_24_08
_CALIBRATION_DRAWS = 100_000
_CALIBRATION_TOL = 0.005

_rate_cache: dict = {}


@dataclass(frozen=True)
class SimulationSpec:
    """One data-generating scenario at a given size."""

    model: str
    n: int = 800
    p: int = 100
    censor_target: float = 0.2
    z_coef: float | None = None    # outcome coefficient of the confounder (primed models)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValidationError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if self.model in ("M1", "M2", "M1p", "M2p") and self.p < 11:
            raise ValidationError("M1/M2 families need p >= 11")
        if self.p < 1:
            raise ValidationError("p must be positive")
        if not 0.0 <= self.censor_target < 1.0:
            raise ValidationError("censor_target must lie in [0, 1)")

    @property
    def primed(self) -> bool:
        return self.model.endswith("p")

    @property
    def effective_z_coef(self) -> float:
        if not self.primed:
            return 0.0
        return DEFAULT_Z_COEF if self.z_coef is None else self.z_coef

    @property
    def true_psi(self) -> float:
        return 0.0 if self.model in ("M0", "M0p") else 0.2


# exposure loadings of the first ten mediators in the M1/M2 families
_ACTIVE_COEFS = np.array([1.0] + [0.6] * 4 + [0.3] * 5)


def _draw_mediators(model: str, n: int, p: int, a: np.ndarray, rng) -> np.ndarray:
    """Mediator matrix per model; exchangeable blocks use one shared factor."""
    if model.startswith("M0"):
        shared = rng.standard_normal(n)
        b = rng.standard_normal((n, p))
        b *= np.sqrt(0.5)
        b += np.sqrt(0.5) * shared[:, None]
        return b
    lead = rng.standard_normal((n, 10))
    lead += a[:, None] * _ACTIVE_COEFS
    shared = rng.standard_normal(n)
    tail = rng.standard_normal((n, p - 10))
    tail *= np.sqrt(0.9)
    tail += np.sqrt(0.1) * shared[:, None]
    return np.concatenate([lead, tail], axis=1)


def _outcome(model: str, a: np.ndarray, b: np.ndarray, z, z_coef: float,
             eps: np.ndarray) -> np.ndarray:
    if model.startswith("M0"):
        t = 0.2 * a + eps
    elif model.startswith("M1"):
        t = 0.4 * a + 0.2 * b[:, 0] + eps
    else:
        t = 0.4 * a + 0.2 * b[:, :5].sum(axis=1) - 0.1 * b[:, 5:10].sum(axis=1) + eps
    if z is not None and z_coef != 0.0:
        t = t + z_coef * z
    return t


def _reduced_outcome_sample(model: str, z_coef: float, size: int, rng, rng_z) -> np.ndarray:
    """Draw outcomes from the model's reduced form (mediator tail never enters)."""
    a = (rng.random(size) < 0.5).astype(np.float64)
    if model.startswith("M0"):
        base = 0.2 * a
    elif model.startswith("M1"):
        # active mediator contributes 0.2 * (A + E1)
        base = 0.6 * a + 0.2 * rng.standard_normal(size)
    else:
        e = rng.standard_normal((size, 10))
        a_through = 0.2 * (1.0 + 0.6 * 4) - 0.1 * (0.3 * 5)
        base = (0.4 + a_through) * a \
            + 0.2 * e[:, :5].sum(axis=1) - 0.1 * e[:, 5:10].sum(axis=1)
    base = base + rng.standard_normal(size)
    if model.endswith("p") and z_coef != 0.0:
        z = (rng_z.random(size) < 0.4).astype(np.float64)
        base = base + z_coef * z
    return base


def calibrate_censoring_rate(spec: SimulationSpec, target: float, seed: int) -> float:
    """Find the exponential rate giving the target censoring fraction.

    Bisection on the log rate against a fixed Monte Carlo draw of outcome and
    unit-exponential pairs; stops when the estimated censored fraction is
    within 0.005 of the target. target=0 short-circuits to rate 0 (no
    censoring).
    """
    if target == 0.0:
        return 0.0
    if not 0.0 < target < 1.0:
        raise ValidationError("censoring target must lie in [0, 1)")
    key = (spec.model, spec.effective_z_coef, round(target, 12), seed)
    cached = _rate_cache.get(key)
    if cached is not None:
        return cached
    main_ss, z_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(main_ss)
    rng_z = np.random.default_rng(z_ss)
    t = _reduced_outcome_sample(spec.model, spec.effective_z_coef, _CALIBRATION_DRAWS, rng, rng_z)
    log_e = np.log(rng.standard_exponential(_CALIBRATION_DRAWS))

    def censored_fraction(log_rate: float) -> float:
        # censoring time is log E - log rate; censored when T exceeds it
        return float(np.mean(t > log_e - log_rate))

    lo, hi = np.log(1e-8), np.log(1e8)
    for _ in range(8):
        if censored_fraction(lo) <= target:
            break
        lo -= 20.0
    for _ in range(8):
        if censored_fraction(hi) >= target:
            break
        hi += 20.0
    if censored_fraction(lo) > target or censored_fraction(hi) < target:
        raise CalibrationError(f"could not bracket censoring target {target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        frac = censored_fraction(mid)
        if abs(frac - target) < _CALIBRATION_TOL:
            rate = float(np.exp(mid))
            _rate_cache[key] = rate
            return rate
        if frac < target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"censoring calibration did not converge for target {target}")


def generate(spec: SimulationSpec, seed: int) -> Dataset:
    """Draw one dataset from the scenario; bit-reproducible given (spec, seed).

    The confounder of the primed models is drawn from a spawned child stream,
    so primed and unprimed scenarios consume identical main-stream draws.
    """
    rate = calibrate_censoring_rate(spec, spec.censor_target, CALIBRATION_SEED)
    main_ss, z_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(main_ss)
    n, p = spec.n, spec.p
    a = (rng.random(n) < 0.5).astype(np.float64)
    b = _draw_mediators(spec.model, n, p, a, rng)
    eps = rng.standard_normal(n)
    z = None
    if spec.primed:
        rng_z = np.random.default_rng(z_ss)
        z = (rng_z.random(n) < 0.4).astype(np.float64)
    t = _outcome(spec.model, a, b, z, spec.effective_z_coef, eps)
    if rate > 0.0:
        c = np.log(rng.standard_exponential(n) / rate)
    else:
        c = np.full(n, np.inf)
    x = np.minimum(t, c)
    delta = (t <= c).astype(np.uint8)
    return Dataset(
        x=x,
        delta=delta,
        a=a.astype(np.uint8),
        b=b,
        z=None if z is None else z[:, None],
        confounder_names=("z1",) if spec.primed else (),
    )


# ---------------------------------------------------------------------------
# coverage studies


@dataclass(frozen=True)
class MethodSummary:
    method: str
    p: int
    reps_done: int
    n_failures: int
    coverage: float
    mean_width: float
    mean_estimate: float
    rejection_rate: float    # share of replications with p_value < alpha


@dataclass(frozen=True)
class RepRecord:
    rep: int
    method: str
    estimate: float
    ci_low: float
    ci_high: float
    p_value: float
    covered: bool
    standardized: float


@dataclass
class CoverageReport:
    spec: SimulationSpec
    alpha: float
    burn_in: int
    truth: float
    methods: tuple
    summaries: list = field(default_factory=list)
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)   # (rep, method, reason)

    def standardized_stats(self, method: str) -> np.ndarray:
        vals = [r.standardized for r in self.records if r.method == method]
        return np.asarray(vals, dtype=np.float64)

    def summary_for(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)

    def to_csv_rows(self) -> list[dict]:
        return [
            {
                "model": self.spec.model,
                "n": self.spec.n,
                "p": s.p,
                "method": s.method,
                "alpha": self.alpha,
                "burn_in": self.burn_in,
                "truth": self.truth,
                "reps": s.reps_done,
                "failures": s.n_failures,
                "coverage": s.coverage,
                "mean_width": s.mean_width,
                "mean_estimate": s.mean_estimate,
                "rejection_rate": s.rejection_rate,
            }
            for s in self.summaries
        ]

    def qq_pairs(self, method: str) -> np.ndarray:
        """Sorted standardized statistics with standard normal quantiles."""
        stats = np.sort(self.standardized_stats(method))
        m = stats.shape[0]
        theo = ndtri((np.arange(1, m + 1) - 0.5) / m)
        return np.column_stack([theo, stats])


def _analyze_one_rep(spec, rep: int, rep_seed: int, methods, burn_in: int,
                     alpha: float, standardize: str, oracle_k: int,
                     config: AnalysisConfig):
    ds = generate(spec, rep_seed)
    if standardize != "raw":
        ds = standardize_mediators(ds, standardize)
    order_seed = rep_seed ^ 0x5EED
    ds = random_ordering(ds, order_seed)
    truth = spec.true_psi
    out = []
    for method in methods:
        try:
            if method == "stabilized":
                est = stabilized_one_step(ds, burn_in, alpha, config)
                lo, hi, pv = est.ci_low, est.ci_high, est.p_value
                point = est.estimate
                std = np.sqrt(est.n_steps) * (point - truth) / est.pooled_sd
            else:
                if method == "bonferroni":
                    res = bonferroni_one_step(ds, alpha, config, correct=True)
                elif method == "naive":
                    res = bonferroni_one_step(ds, alpha, config, correct=False)
                elif method == "oracle":
                    res = oracle_one_step(ds, oracle_k, alpha, config)
                else:
                    raise ValidationError(f"unknown method {method!r}")
                lo, hi, pv = res.ci_low, res.ci_high, res.p_value
                point = res.estimate
                std = (point - truth) / res.se
            out.append(RepRecord(
                rep=rep, method=method, estimate=float(point), ci_low=float(lo),
                ci_high=float(hi), p_value=float(pv),
                covered=bool(lo <= truth <= hi), standardized=float(std),
            ))
        except SurvnieError as exc:
            out.append((rep, method, f"{type(exc).__name__}: {exc}"))
    return out


_STUDY_ARGS: dict = {}


def _study_worker(item):
    rep, rep_seed = item
    w = _STUDY_ARGS
    return _analyze_one_rep(
        w["spec"], rep, rep_seed, w["methods"], w["burn_in"], w["alpha"],
        w["standardize"], w["oracle_k"], w["config"],
    )


def run_coverage_study(spec: SimulationSpec, reps: int, methods, burn_in: int,
                       alpha: float, seed: int, standardize: str = "normal_score",
                       oracle_k: int = 0,
                       config: AnalysisConfig = DEFAULT_CONFIG) -> CoverageReport:
    """Monte Carlo coverage/width study against the scenario's true value.

    Per replication: generate, standardize the mediators, reshuffle, and run
    every requested method; failures are recorded with their reason rather
    than dropped silently. Replication seeds are spawned from the master seed
    and results are merged by replication index.
    """
    if reps < 1:
        raise ValidationError("need at least one replication")
    methods = tuple(methods)
    children = np.random.SeedSequence(seed).spawn(reps)
    rep_seeds = []
    for child in children:
        state = child.generate_state(2, np.uint32)
        rep_seeds.append(int(state[0]) | (int(state[1]) << 32))

    items = list(enumerate(rep_seeds))
    if config.threads > 1 and reps > 1 and hasattr(os, "fork"):
        _STUDY_ARGS.update(
            spec=spec, methods=methods, burn_in=burn_in, alpha=alpha,
            standardize=standardize, oracle_k=oracle_k, config=config,
        )
        try:
            mp = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=min(config.threads, reps),
                                     mp_context=mp) as pool:
                chunks = list(pool.map(_study_worker, items, chunksize=8))
        finally:
            _STUDY_ARGS.clear()
    else:
        chunks = [
            _analyze_one_rep(spec, rep, rep_seed, methods, burn_in, alpha,
                             standardize, oracle_k, config)
            for rep, rep_seed in items
        ]

    report = CoverageReport(
        spec=spec, alpha=alpha, burn_in=burn_in, truth=spec.true_psi, methods=methods
    )
    for chunk in chunks:
        for entry in chunk:
            if isinstance(entry, RepRecord):
                report.records.append(entry)
            else:
                report.failures.append(entry)

    for method in methods:
        recs = [r for r in report.records if r.method == method]
        fails = [f for f in report.failures if f[1] == method]
        if recs:
            coverage = float(np.mean([r.covered for r in recs]))
            width = float(np.mean([r.ci_high - r.ci_low for r in recs]))
            mean_est = float(np.mean([r.estimate for r in recs]))
            rej = float(np.mean([r.p_value < alpha for r in recs]))
        else:
            coverage = width = mean_est = rej = float("nan")
        report.summaries.append(MethodSummary(
            method=method, p=spec.p, reps_done=len(recs), n_failures=len(fails),
            coverage=coverage, mean_width=width, mean_estimate=mean_est,
            rejection_rate=rej,
        ))
    return report
