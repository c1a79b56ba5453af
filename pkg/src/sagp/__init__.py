"""Sparse additive Gaussian process regression on recursively partitioned domains."""

from .data import Dataset, Table, standardize
from .errors import SagpError
from .inference import PredictionResult, cv_select_layers, fit, predict
from .partition import build_full_rp, locate, prune
from .sampler import McmcConfig, PosteriorSamples, Priors, run_mcmc

__all__ = [
    "Dataset",
    "McmcConfig",
    "PosteriorSamples",
    "PredictionResult",
    "Priors",
    "SagpError",
    "Table",
    "build_full_rp",
    "cv_select_layers",
    "fit",
    "locate",
    "predict",
    "prune",
    "run_mcmc",
    "standardize",
]
