"""Analysis configuration shared across estimation modules."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import ValidationError


@dataclass(frozen=True)
class AnalysisConfig:
    """Knobs of the estimation pipeline.

    nuisance_scope
        "appendix": the censoring model comes from the full sample while all
        other nuisance components are refit on each growing data prefix.
        "full": every component is fit once on the full sample and reused at
        every prefix step.
    adjust_for_confounders
        Adjust the outcome slope and the exposure shift for the dataset's
        confounder columns (the extended estimator).
    """

    nuisance_scope: str = "appendix"
    adjust_for_confounders: bool = False
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    # numerical guards
    eps_censoring_survival: float = 1e-6   # floor on G(x-) before weight truncation
    eps_slope_denominator: float = 1e-12   # degenerate-design threshold for slopes
    eps_step_sd: float = 1e-10             # degenerate step standard deviation

    # logistic fit of exposure on a single mediator
    logistic_max_iter: int = 50
    logistic_tol: float = 1e-8
    logistic_ridge: float = 1e-10
    logistic_clip: float = 15.0

    def __post_init__(self):
        if self.nuisance_scope not in ("appendix", "full"):
            raise ValidationError(f"unknown nuisance_scope: {self.nuisance_scope!r}")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")


DEFAULT_CONFIG = AnalysisConfig()
