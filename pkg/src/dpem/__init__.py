"""Diffusion piecewise exponential survival models fitted with a sticky forward event chain sampler."""

from .data import Dataset, DataError, Observation, load_colon, load_dataset, simulate_dataset
from .discretise import InnovationScheme, simulate_paths, simulate_prior_hazard
from .drift import (
    CentredMean,
    GammaLangevin,
    GaussianLangevin,
    GompertzLinear,
    RandomWalk,
    TaperedGammaLangevin,
    WaningEffect,
    drift_from_dict,
)
from .knots import CandidateKnots, KnotConfig
from .model import HazardModel, Target
from .pdmp import SamplerConfig, StickySampler, run_chain
from .posterior import (
    ExtrapolationConfig,
    PosteriorDraws,
    curve_quantiles,
    ess,
    extrapolate,
    extrapolate_endpoints,
    mean_survival,
    psis_loo,
)
from .rj import RjConfig, run_rj

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DataError",
    "Observation",
    "load_colon",
    "load_dataset",
    "simulate_dataset",
    "InnovationScheme",
    "simulate_paths",
    "simulate_prior_hazard",
    "CentredMean",
    "GammaLangevin",
    "GaussianLangevin",
    "GompertzLinear",
    "RandomWalk",
    "TaperedGammaLangevin",
    "WaningEffect",
    "drift_from_dict",
    "CandidateKnots",
    "KnotConfig",
    "HazardModel",
    "Target",
    "SamplerConfig",
    "StickySampler",
    "run_chain",
    "ExtrapolationConfig",
    "PosteriorDraws",
    "curve_quantiles",
    "ess",
    "extrapolate",
    "extrapolate_endpoints",
    "mean_survival",
    "psis_loo",
    "RjConfig",
    "run_rj",
]
