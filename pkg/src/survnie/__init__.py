"""Post-selection inference for the maximal natural indirect effect of a
binary exposure on a right-censored survival outcome, screened over many
candidate mediators."""

__version__ = "0.1.0"

from .censoring import (
    CensoringModel,
    SyntheticResponses,
    fit_censoring_km,
    martingale_integral,
    synthetic_responses,
)
from .competing import CompetitorResult, bonferroni_one_step, oracle_one_step
from .config import DEFAULT_CONFIG, AnalysisConfig
from .dataset import (
    CsvSchema,
    Dataset,
    Observation,
    load_csv,
    random_ordering,
    standardize_mediators,
)
from .influence import (
    InfluenceValue,
    OneStepEstimate,
    efficient_influence,
    influence_base,
    influence_car_correction,
    influence_vector,
    one_step,
)
from .nuisance import (
    CondMeanFit,
    LogisticFit,
    NuisanceSet,
    PrefixStats,
    assemble_nuisance,
    fit_conditional_mean_regression,
    fit_conditional_mediator_means,
    fit_exposure_prob,
    fit_ksv_slope,
    fit_reciprocal_odds,
    make_context,
)
from .simulation import (
    CoverageReport,
    SimulationSpec,
    calibrate_censoring_rate,
    generate,
    run_coverage_study,
)
from .stabilized import (
    OrderingEnsemble,
    StabilizedEstimate,
    StabilizedTrace,
    ci_pvalue,
    combine_steps,
    interval_and_p,
    multi_ordering_analysis,
    select_mediator,
    stabilized_one_step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
