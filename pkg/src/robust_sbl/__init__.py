"""Robust sparse Bayesian learning with error-entropy likelihoods."""

from .baselines import (
    SBCL,
    SBL_BINOMIAL,
    SBL_GAUSSIAN,
    SBL_MEE,
    estimate_noise_variance,
    fit_baseline,
    fit_estimator,
)
from .engine import (
    FitConfig,
    FitReport,
    NumericalError,
    PosteriorState,
    expected_w_sq,
    fit_correntropy,
    fit_sbl_mee,
    map_predictor,
    negative_hessian,
    optimize_w,
    penalized_gradient,
    penalized_objective,
    update_relevance,
)
from .entropy import (
    Codebook,
    build_codebook,
    gaussian_kernel,
    mee_log_likelihood,
    qmee_objective,
    quantization_threshold,
    restricted_codebook,
)
from .estimators import (
    SBCLClassifier,
    SBCLRegressor,
    SBLBinomialClassifier,
    SBLGaussianRegressor,
    SBLMEEClassifier,
    SBLMEERegressor,
)
from .glm import ActiveSet, Dataset, GlmModel, predict, residuals
from .model_io import ModelFile

__version__ = "0.1.0"

__all__ = [
    "ActiveSet",
    "Codebook",
    "Dataset",
    "FitConfig",
    "FitReport",
    "GlmModel",
    "ModelFile",
    "NumericalError",
    "PosteriorState",
    "SBCL",
    "SBCLClassifier",
    "SBCLRegressor",
    "SBL_BINOMIAL",
    "SBL_GAUSSIAN",
    "SBL_MEE",
    "SBLBinomialClassifier",
    "SBLGaussianRegressor",
    "SBLMEEClassifier",
    "SBLMEERegressor",
    "build_codebook",
    "estimate_noise_variance",
    "expected_w_sq",
    "fit_baseline",
    "fit_correntropy",
    "fit_estimator",
    "fit_sbl_mee",
    "gaussian_kernel",
    "map_predictor",
    "mee_log_likelihood",
    "negative_hessian",
    "optimize_w",
    "penalized_gradient",
    "penalized_objective",
    "predict",
    "qmee_objective",
    "quantization_threshold",
    "residuals",
    "restricted_codebook",
    "update_relevance",
]
