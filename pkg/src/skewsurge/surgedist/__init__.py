"""Skew-surge distribution: GPD tail, exceedance rate and empirical body."""
from __future__ import annotations

from .body import EmpiricalBody, build_body
from .model import (
    BoundDistribution,
    BoundSurge,
    LrtResult,
    SurgeDistribution,
    SurgeModel,
    fit_surge_model,
    lrt,
    model_select,
)
from .rate import RateFit, RateParams, SeparationError, eval_lambda, fit_rate
from .tail import TailFit, TailModelSpec, TailParams, eval_sigma, fit_tail, nll_tail, nll_tail_gradient

__all__ = [
    "BoundDistribution", "BoundSurge", "EmpiricalBody", "LrtResult", "RateFit", "RateParams",
    "SeparationError", "SurgeDistribution", "SurgeModel", "TailFit", "TailModelSpec", "TailParams",
    "build_body", "eval_lambda", "eval_sigma", "fit_rate", "fit_surge_model", "fit_tail", "lrt",
    "model_select", "nll_tail", "nll_tail_gradient",
]
