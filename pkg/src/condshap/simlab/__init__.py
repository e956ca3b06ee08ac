"""Simulation laboratory: feature generators, sampling models, built-in
predictors, the batch experiment runner, and the MAE / skill-score metrics."""

from .distributions import (
    EquicorrelatedCov,
    GaussianFeatures,
    GHFeatures,
    GHParams,
    MixtureFeatures,
    MixtureParams,
    gh_conditional,
    gh_params_10d,
    gig_mean,
    gig_moment,
    sample_equicorrelated_gaussian,
    sample_gh,
    sample_gig,
    sample_mixture,
)
from .models import (
    OlsModel,
    StumpEnsembleModel,
    fit_ols,
    fit_stump_ensemble,
    fun1,
    fun2,
    fun3,
    linear_sampling_model,
    piecewise_sampling_model,
)
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    FeatureFamily,
    mae,
    run_experiment,
    skill_score,
)

__all__ = [
    "EquicorrelatedCov",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureFamily",
    "GaussianFeatures",
    "GHFeatures",
    "GHParams",
    "MixtureFeatures",
    "MixtureParams",
    "OlsModel",
    "StumpEnsembleModel",
    "fit_ols",
    "fit_stump_ensemble",
    "fun1",
    "fun2",
    "fun3",
    "gh_conditional",
    "gh_params_10d",
    "gig_mean",
    "gig_moment",
    "linear_sampling_model",
    "mae",
    "piecewise_sampling_model",
    "run_experiment",
    "sample_equicorrelated_gaussian",
    "sample_gh",
    "sample_gig",
    "sample_mixture",
    "skill_score",
]
