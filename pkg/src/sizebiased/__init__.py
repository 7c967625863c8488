"""Bayesian size-biased estimation of bug populations and software reliability.

Phase-wise software-testing detection counts are modelled with a latent
"eventual size" per bug that drives its detection probability; zero
augmentation turns the unknown bug total into an inclusion problem.  The
package provides the exact likelihood, custom MCMC kernels, a multi-chain
engine with convergence diagnostics, posterior-predictive reliability and
stopping-phase estimation, a grouped-bug variant, a simulation/replication
harness, scikit-learn style estimators, and a command-line interface.
"""

__version__ = "0.1.0"

from .engine import ChainSet, PosteriorSummary, RunConfig, gelman_rubin, run, summarize
from .errors import (
    DegenerateChainError,
    InitializationError,
    SamplerError,
    SizeBiasedError,
    ValidationError,
)
from .estimators import GroupedBugModel, SizeBiasedBugModel
from .grouped import (
    GroupedData,
    GroupedDraw,
    GroupedModel,
    GroupRecord,
    grouped_log_likelihood,
    grouped_remaining_size,
    run_grouped,
    sample_undetected_counts,
    total_bugs,
)
from .likelihood import detection_probability, log_likelihood, log_prior
from .prediction import (
    PredictionConfig,
    PredictionResult,
    predict,
    reliability_curve,
    replicate_detections,
    size_trajectories,
    stopping_phase,
)
from .samplers import SamplerConfig, sweep
from .simulation import (
    ScenarioSpec,
    StudyReport,
    calibrate_size_prior,
    coefficient_of_variation,
    coverage,
    expected_detected,
    generate,
    reference_scenarios,
    relative_bias,
    run_study,
)
from .types import (
    AugmentedModel,
    BugRecord,
    DetectionHistory,
    ParameterDraw,
    PhasePlan,
    Priors,
)

__all__ = [
    "__version__",
    # types
    "PhasePlan", "BugRecord", "DetectionHistory", "AugmentedModel", "Priors",
    "ParameterDraw",
    # likelihood
    "detection_probability", "log_likelihood", "log_prior",
    # samplers / engine
    "SamplerConfig", "sweep", "RunConfig", "ChainSet", "PosteriorSummary",
    "run", "gelman_rubin", "summarize",
    # prediction
    "PredictionConfig", "PredictionResult", "replicate_detections",
    "size_trajectories", "stopping_phase", "reliability_curve", "predict",
    # grouped
    "GroupRecord", "GroupedData", "GroupedModel", "GroupedDraw",
    "grouped_log_likelihood", "total_bugs", "grouped_remaining_size",
    "sample_undetected_counts", "run_grouped",
    # simulation
    "ScenarioSpec", "StudyReport", "generate", "relative_bias",
    "coefficient_of_variation", "coverage", "expected_detected",
    "calibrate_size_prior", "reference_scenarios", "run_study",
    # estimators
    "SizeBiasedBugModel", "GroupedBugModel",
    # errors
    "SizeBiasedError", "ValidationError", "SamplerError",
    "InitializationError", "DegenerateChainError",
]
