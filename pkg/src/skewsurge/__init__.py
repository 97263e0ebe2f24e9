"""Extreme sea levels from skew surge and peak tide records.

Subpackages and modules:

``ingest``       record parsing, thresholds, tidal samples, detrending
``surgedist``    composite surge distribution (body, GPD tail, exceedance rate)
``exi``          level-dependent extremal index
``maxima``       maxima distributions, return levels, month of occurrence
``dependence``   surge-tide dependence tests and chi measures
``uncertainty``  stationary bootstrap and PIT diagnostics
``simulate``     synthetic data from a known truth
"""
from __future__ import annotations

__version__ = "0.1.0"

from .exi import ExiModel, fit_exi_model, theta_eval, theta_intervals, theta_runs
from .ingest import (
    Covariates,
    MonthlyThresholds,
    Records,
    TidalCycleRecord,
    TidalSampleSet,
    build_tidal_samples,
    compute_thresholds,
    detrend_linear,
    parse_records,
    recenter_annual_means,
)
from .maxima import (
    ReturnLevelCurve,
    VariantSpec,
    annual_max_cdf,
    empirical_return_levels,
    month_occurrence_probs,
    monthly_max_cdf,
    return_level,
    year_specific_cdf,
)
from .pipeline import FittedPipeline, PipelineConfig, fit_pipeline
from .surgedist import SurgeModel, TailModelSpec, TailParams, RateParams, fit_surge_model

__all__ = [
    "Covariates", "ExiModel", "FittedPipeline", "MonthlyThresholds", "PipelineConfig", "RateParams",
    "Records", "ReturnLevelCurve", "SurgeModel", "TailModelSpec", "TailParams", "TidalCycleRecord",
    "TidalSampleSet", "VariantSpec", "annual_max_cdf", "build_tidal_samples", "compute_thresholds",
    "detrend_linear", "empirical_return_levels", "fit_exi_model", "fit_pipeline", "fit_surge_model",
    "month_occurrence_probs", "monthly_max_cdf", "parse_records", "recenter_annual_means", "return_level",
    "theta_eval", "theta_intervals", "theta_runs", "year_specific_cdf",
]
