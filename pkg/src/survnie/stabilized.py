"""Stabilized one-step estimation of the maximal natural indirect effect.

The sample is processed as a sequence of growing prefixes. Each prefix
selects the mediator with the largest absolute plug-in NIE, evaluates the
held-out one-step increment at the next observation, and records the
prefix influence standard deviation. Increments are combined with
inverse-sd weights; a normal calibration gives the confidence interval and
p-value. Multiple random orderings are combined by a Bonferroni rule.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import multiprocessing
import numpy as np
from scipy.special import ndtr, ndtri

from .censoring import fit_censoring_km
from .config import DEFAULT_CONFIG, AnalysisConfig
from .dataset import Dataset, random_ordering
from .errors import DegenerateVarianceError, PositivityError, ValidationError
from .influence import influence_vector
from .nuisance import NuisanceSet, PrefixStats, assemble_nuisance, make_context

N_CHECKPOINTS = 5


def select_mediator(ns: NuisanceSet) -> tuple[int, int]:
    """Index of the largest |NIE| (ties: smallest index) and its sign.

    The sign is +1 when the selected plug-in NIE is nonnegative.
    """
    k = int(np.argmax(np.abs(ns.nie)))
    sign = 1 if ns.nie[k] >= 0.0 else -1
    return k, sign


@dataclass(frozen=True)
class StabilizedTrace:
    """Per-step record of the prefix sweep."""

    j_values: np.ndarray       # prefix lengths
    selected: np.ndarray       # selected mediator index per step
    signs: np.ndarray          # +1/-1 per step
    step_sd: np.ndarray        # prefix influence standard deviation per step
    held_out: np.ndarray       # plug-in + influence at the held-out observation
    contributions: np.ndarray  # weight * sign * held_out


@dataclass(frozen=True)
class StabilizedEstimate:
    estimate: float            # weighted mean of signed held-out increments
    pooled_sd: float           # inverse-mean of the reciprocal step sds
    burn_in: int
    n: int
    alpha: float
    ci_low: float
    ci_high: float
    p_value: float
    trace: StabilizedTrace
    ordering_seed: int | None = None

    @property
    def n_steps(self) -> int:
        return self.n - self.burn_in

    @property
    def se(self) -> float:
        return self.pooled_sd / np.sqrt(self.n_steps)


def interval_and_p(estimate: float, pooled_sd: float, n_steps: int,
                   alpha: float) -> tuple[tuple[float, float], float]:
    """Normal interval estimate +/- z_{alpha/2} * pooled_sd / sqrt(steps) and two-sided p."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    scale = pooled_sd / np.sqrt(n_steps)
    z = float(ndtri(1.0 - alpha / 2.0))
    stat = abs(estimate) / scale if scale > 0 else np.inf
    p = float(2.0 * ndtr(-stat))
    return (estimate - z * scale, estimate + z * scale), min(max(p, 0.0), 1.0)


def ci_pvalue(est: StabilizedEstimate, alpha: float) -> tuple[tuple[float, float], float]:
    """Recompute the confidence interval and p-value at another level."""
    return interval_and_p(est.estimate, est.pooled_sd, est.n_steps, alpha)


def combine_steps(signs, step_sd, held_out) -> tuple[float, float, np.ndarray]:
    """Aggregate per-step records into (estimate, pooled sd, contributions)."""
    signs = np.asarray(signs, dtype=np.float64)
    step_sd = np.asarray(step_sd, dtype=np.float64)
    held_out = np.asarray(held_out, dtype=np.float64)
    inv = 1.0 / step_sd
    pooled = 1.0 / float(inv.mean())
    contributions = pooled * inv * signs * held_out
    return float(contributions.mean()), pooled, contributions


def stabilized_one_step(d: Dataset, burn_in: int, alpha: float = 0.1,
                        config: AnalysisConfig = DEFAULT_CONFIG,
                        ordering_seed: int | None = None) -> StabilizedEstimate:
    """Run the prefix sweep over an (already ordered) dataset.

    ``burn_in`` is the first prefix length; steps run over prefix lengths
    burn_in..n-1, each evaluated at the immediately following observation.
    """
    n = d.n
    if not 1 <= burn_in < n:
        raise ValidationError(f"burn-in {burn_in} out of range for n={n}")
    cm = fit_censoring_km(d)
    ctx = make_context(d, cm, config)
    n_steps = n - burn_in
    selected = np.empty(n_steps, dtype=np.int64)
    signs = np.empty(n_steps, dtype=np.int64)
    step_sd = np.empty(n_steps)
    held_out = np.empty(n_steps)

    full_scope = config.nuisance_scope == "full"
    if full_scope:
        ns_full = assemble_nuisance(d, cm, config, ctx=ctx)
        k_full, sign_full = select_mediator(ns_full)
        values_full = influence_vector(ns_full, k_full)
        plugin_full = float(ns_full.nie[k_full])
    else:
        stats = PrefixStats(ctx, config)
        stats.extend_to(burn_in)

    for j in range(burn_in, n):
        step = j - burn_in
        if full_scope:
            k, sign = k_full, sign_full
            values = values_full[: j + 1]
            plugin = plugin_full
        else:
            stats.extend_to(j)
            ns_j = stats.snapshot(cm)
            k, sign = select_mediator(ns_j)
            values = influence_vector(ns_j, k, upto=j + 1)
            plugin = float(ns_j.nie[k])
        sd_j = float(np.std(values[:j]))
        if sd_j < config.eps_step_sd:
            raise DegenerateVarianceError(
                f"influence standard deviation collapsed at prefix {j}", mediator=k
            )
        selected[step] = k
        signs[step] = sign
        step_sd[step] = sd_j
        held_out[step] = plugin + float(values[j])

    estimate, pooled, contributions = combine_steps(signs, step_sd, held_out)
    (lo, hi), p = interval_and_p(estimate, pooled, n_steps, alpha)
    trace = StabilizedTrace(
        j_values=np.arange(burn_in, n),
        selected=selected,
        signs=signs,
        step_sd=step_sd,
        held_out=held_out,
        contributions=contributions,
    )
    return StabilizedEstimate(
        estimate=estimate,
        pooled_sd=pooled,
        burn_in=burn_in,
        n=n,
        alpha=alpha,
        ci_low=float(lo),
        ci_high=float(hi),
        p_value=p,
        trace=trace,
        ordering_seed=ordering_seed,
    )


# ---------------------------------------------------------------------------
# multiple random orderings


@dataclass(frozen=True)
class OrderingFailure:
    index: int
    reason: str


@dataclass(frozen=True)
class OrderingEnsemble:
    """Per-ordering results plus Bonferroni-combined inference."""

    results: tuple
    failures: tuple
    orderings: int
    alpha: float
    combined_p: float
    reported_index: int
    combined_ci_low: float
    combined_ci_high: float
    checkpoint_selected: tuple       # ((mediator label, count), ...) most frequent first
    seed: int

    @property
    def reported(self) -> StabilizedEstimate:
        return self.results[self.reported_index]


def ordering_seed_for(master_seed: int, index: int, attempt: int = 0) -> int:
    """Deterministic 64-bit ordering seed: master sequence spawned per index.

    Each ordering index gets its own spawned seed sequence; a retry after a
    positivity failure spawns one level deeper. Independent of worker count.
    """
    child = np.random.SeedSequence(master_seed).spawn(index + 1)[index]
    if attempt:
        child = child.spawn(attempt)[attempt - 1]
    state = child.generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _run_single_ordering(d: Dataset, index: int, master_seed: int, burn_in: int,
                         alpha: float, config: AnalysisConfig):
    for attempt in range(2):
        oseed = ordering_seed_for(master_seed, index, attempt)
        shuffled = random_ordering(d, oseed)
        try:
            return stabilized_one_step(shuffled, burn_in, alpha, config, ordering_seed=oseed)
        except PositivityError as exc:
            last = str(exc)
    return OrderingFailure(index=index, reason=last)


_WORKER_ARGS: dict = {}


def _ordering_worker(index: int):
    w = _WORKER_ARGS
    return _run_single_ordering(
        w["dataset"], index, w["seed"], w["burn_in"], w["alpha"], w["config"]
    )


def checkpoint_selection(est: StabilizedEstimate, names) -> tuple:
    """Selected mediators at five evenly spaced prefix checkpoints.

    Returns (label, count) pairs sorted by decreasing frequency then label.
    """
    js = np.unique(np.linspace(est.burn_in, est.n - 1, num=N_CHECKPOINTS).round().astype(int))
    counts: dict[str, int] = {}
    for j in js:
        k = int(est.trace.selected[j - est.burn_in])
        label = names[k]
        counts[label] = counts.get(label, 0) + 1
    return tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def multi_ordering_analysis(d: Dataset, orderings: int, burn_in: int,
                            alpha: float, seed: int,
                            config: AnalysisConfig = DEFAULT_CONFIG) -> OrderingEnsemble:
    """Analyze ``orderings`` seeded shuffles and Bonferroni-combine them.

    The reported result is the ordering with the smallest p-value (ties:
    smallest ordering index); its interval is recomputed at level
    alpha/orderings and the combined p-value is min(1, orderings * min p).
    """
    if orderings < 1:
        raise ValidationError("need at least one ordering")
    indices = list(range(orderings))
    if config.threads > 1 and orderings > 1 and hasattr(os, "fork"):
        _WORKER_ARGS.update(
            dataset=d, seed=seed, burn_in=burn_in, alpha=alpha, config=config
        )
        try:
            mp = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=min(config.threads, orderings),
                                     mp_context=mp) as pool:
                outcomes = list(pool.map(_ordering_worker, indices))
        finally:
            _WORKER_ARGS.clear()
    else:
        outcomes = [
            _run_single_ordering(d, i, seed, burn_in, alpha, config) for i in indices
        ]

    results: list = [None] * orderings
    failures: list[OrderingFailure] = []
    for i, out in enumerate(outcomes):
        if isinstance(out, OrderingFailure):
            failures.append(out)
        else:
            results[i] = out
    successes = [(i, r) for i, r in enumerate(results) if r is not None]
    if not successes:
        raise PositivityError("every ordering failed positivity; increase the burn-in")
    reported_index, reported = min(successes, key=lambda ir: (ir[1].p_value, ir[0]))
    min_p = reported.p_value
    combined_p = min(1.0, orderings * min_p)
    (lo, hi), _ = ci_pvalue(reported, alpha / orderings)
    return OrderingEnsemble(
        results=tuple(results),
        failures=tuple(failures),
        orderings=orderings,
        alpha=alpha,
        combined_p=combined_p,
        reported_index=reported_index,
        combined_ci_low=float(lo),
        combined_ci_high=float(hi),
        checkpoint_selected=checkpoint_selection(reported, d.mediator_names),
        seed=seed,
    )
