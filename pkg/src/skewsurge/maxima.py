"""Monthly and annual sea-level maxima from surge and tide, and return levels.

Sea level in a cycle is ``Z = X + Y`` with deterministic peak tide ``X``.
For a tidal sample year ``k`` the probability that no cycle exceeds ``z``
is the product of surge CDFs at ``z - X``; products are accumulated in
log space. The seven variants differ in how tides and surges are paired:

current
    every observed cycle pooled, ``(prod F)^(1/K)``.
baseline
    average over years of the yearly product; monthly maxima take the
    month's share of cycles from a within-year stationary tide.
seasonal_surge
    seasonal surge law, tides stationary within each year: every surge
    context meets the whole year's tide distribution.
seasonal_tide, full_seasonal, interaction
    average over years of the product over each cycle's own covariates.
temporal_dependence
    as ``interaction`` with each factor raised to ``theta(z - X)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .exi import ExiModel, theta_eval
from .ingest import Covariates, TidalSampleSet
from .surgedist.model import SurgeDistribution

VARIANTS = ("current", "baseline", "seasonal_surge", "seasonal_tide", "full_seasonal", "interaction",
            "temporal_dependence")
BISECTION_TOL = 1e-4


class ReturnLevelError(ValueError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    """A maxima model: variant name, surge law, tidal samples and optional extremal index."""

    variant: str
    surge: SurgeDistribution = field(repr=False)
    tides: TidalSampleSet = field(repr=False)
    exi: ExiModel | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "temporal_dependence" and self.exi is None:
            raise ValueError("temporal_dependence requires an extremal index model")
        if self.variant in ("interaction", "temporal_dependence") and not getattr(self.surge, "tide_dependent", False):
            raise ValueError(f"{self.variant} requires a surge model with peak-tide covariates")

    @property
    def K(self) -> int:
        return self.tides.K

    @property
    def uses_theta(self) -> bool:
        return self.variant == "temporal_dependence"

    # -- cached evaluation structures -------------------------------------
    @cached_property
    def _cycles(self):
        years = self.tides.years
        cov = Covariates(
            np.concatenate([y.doy for y in years]),
            np.concatenate([y.month for y in years]),
            np.concatenate([y.dom for y in years]),
            np.concatenate([y.tide for y in years]),
        )
        year_idx = np.concatenate([np.full(y.tide.size, k) for k, y in enumerate(years)])
        key = 12 * year_idx + (cov.month - 1)
        return cov, self.surge.bind(cov), key

    @cached_property
    def _contexts(self):
        """Per year: distinct calendar contexts, their counts and a bound surge law."""
        out = []
        for ys in self.tides.years:
            ctx = np.stack([ys.doy, ys.month, ys.dom], axis=1)
            uniq, counts = np.unique(ctx, axis=0, return_counts=True)
            cov = Covariates(uniq[:, 0], uniq[:, 1], uniq[:, 2], np.full(uniq.shape[0], np.mean(ys.tide)))
            bound = None if getattr(self.surge, "tide_dependent", False) else self.surge.bind(cov)
            out.append((cov, counts, bound, ys.tide))
        return out

    @cached_property
    def counts(self) -> np.ndarray:
        return self.tides.counts.astype(float)

    # -- log monthly blocks ------------------------------------------------
    def _cycle_logs(self, z: float) -> np.ndarray:
        """Per-year, per-month sums of (theta-weighted) log surge CDFs, shape (K, 12)."""
        cov, bound, key = self._cycles
        y = z - cov.tide
        lf = bound.logcdf(y)
        if self.uses_theta:
            lf = theta_eval(self.exi, y) * lf
        return _block_sum(lf, key, self.K)

    def _seasonal_surge_logs(self, z: float) -> np.ndarray:
        out = np.zeros((self.K, 12))
        for k, (cov, counts, bound, tide) in enumerate(self._contexts):
            y = z - tide[:, None]
            if bound is None:
                n = len(cov)
                rep = Covariates(np.tile(cov.doy, tide.size), np.tile(cov.month, tide.size),
                                 np.tile(cov.dom, tide.size), np.repeat(tide, n))
                flat = np.broadcast_to(y, (tide.size, n)).reshape(-1)
                lf = self.surge.bind(rep).logcdf(flat).reshape(tide.size, n)
            else:
                lf = bound.logcdf(y)
            per_ctx = counts * lf.mean(axis=0)
            out[k] = np.bincount(cov.month - 1, weights=per_ctx, minlength=12)
        return out

    def log_blocks(self, z: float) -> np.ndarray:
        """Log of each year's monthly factor of the annual product, shape (K, 12)."""
        if self.variant == "seasonal_surge":
            return self._seasonal_surge_logs(z)
        return self._cycle_logs(z)

    # -- distribution functions -------------------------------------------
    def log_annual_cdf(self, z: float) -> float:
        L = self.log_blocks(z).sum(axis=1)
        if self.variant == "current":
            return float(np.mean(L))
        return float(logsumexp(L) - np.log(self.K))

    def log_monthly_cdf(self, month: int, z: float) -> float:
        L = self.log_blocks(z)
        j = month - 1
        if self.variant in ("current", "baseline"):
            total = L.sum(axis=1)
            T = self.counts.sum(axis=1)
            if self.variant == "current":
                return float(np.mean(self.counts[:, j]) / np.mean(T) * np.mean(total))
            return float(logsumexp(self.counts[:, j] / T * total) - np.log(self.K))
        return float(logsumexp(L[:, j]) - np.log(self.K))

    def log_year_cdf(self, k: int, z: float) -> float:
        return float(self.log_blocks(z)[k].sum())


def _block_sum(values: np.ndarray, key: np.ndarray, K: int) -> np.ndarray:
    finite = np.isfinite(values)
    out = np.bincount(key[finite], weights=values[finite], minlength=12 * K).astype(float).reshape(K, 12)
    if not finite.all():
        bad = np.unique(key[~finite])
        out.reshape(-1)[bad] = -np.inf
    return out


def _vectorise(fn, z):
    z_arr = np.asarray(z, dtype=float)
    out = np.array([fn(float(v)) for v in z_arr.reshape(-1)])
    return out.reshape(z_arr.shape) if z_arr.ndim else float(out[0])


def monthly_max_cdf(spec: VariantSpec, month: int, z):
    """Distribution function of the month ``month`` maximum sea level."""
    if not 1 <= month <= 12:
        raise ValueError("month must lie in 1..12")
    return _vectorise(lambda v: np.exp(spec.log_monthly_cdf(month, v)), z)


def annual_max_cdf(spec: VariantSpec, z):
    """Distribution function of the annual maximum sea level."""
    return _vectorise(lambda v: np.exp(spec.log_annual_cdf(v)), z)


def year_specific_cdf(spec: VariantSpec, k: int, z):
    """Annual maximum distribution for tidal sample year ``k`` (0-based) alone."""
    if not 0 <= k < spec.K:
        raise ValueError(f"year index {k} outside 0..{spec.K - 1}")
    return _vectorise(lambda v: np.exp(spec.log_year_cdf(k, v)), z)


def _bracket(spec: VariantSpec) -> tuple[float, float]:
    _, bound, _ = spec._cycles
    lo_s, hi_s = bound.support()
    return spec.tides.min_tide + lo_s, spec.tides.hat + hi_s


def _solve(log_cdf, p: float, lo: float, hi: float, tol: float = BISECTION_TOL) -> float:
    target = np.log1p(-p)
    if log_cdf(lo) >= target:
        raise ReturnLevelError(
            f"distribution already reaches 1 - p = {1 - p:.6g} at the lower bracket {lo:.4f}; "
            "p is too large for the discrete empirical body, use empirical_return_levels instead")
    width = hi - lo
    for _ in range(60):
        if log_cdf(hi) >= target:
            break
        lo, hi = hi, hi + 2 * width
        width = hi - lo
    else:
        raise ReturnLevelError(f"could not bracket the level with exceedance probability {p:g}")

    # exceedance probability minus p: finite, monotone, changes sign on [lo, hi]
    def excess(z):
        return p + np.expm1(log_cdf(z))

    return float(brentq(excess, lo, hi, xtol=tol / 2))


def return_level(spec: VariantSpec, p: float, month: int | None = None, year: int | None = None) -> float:
    """Level exceeded by the annual (or month ``month``) maximum with probability ``p``.

    Solved to 1e-4 m by a bracketing root finder (Brent's method, which
    falls back to bisection steps). ``year`` selects a year-specific
    annual curve instead of the average over tidal samples.
    """
    if not 0 < p < 1:
        raise ValueError("exceedance probability must lie in (0, 1)")
    if month is not None and year is not None:
        raise ValueError("choose either a month or a year, not both")
    if month is not None:
        fn = lambda z: spec.log_monthly_cdf(month, z)  # noqa: E731
    elif year is not None:
        fn = lambda z: spec.log_year_cdf(year, z)  # noqa: E731
    else:
        fn = spec.log_annual_cdf
    lo, hi = _bracket(spec)
    return _solve(fn, p, lo, hi)


@dataclass(frozen=True)
class ReturnLevelCurve:
    p: np.ndarray
    z: np.ndarray
    variant: str
    month: int | None = None
    year: int | None = None

    @property
    def return_period(self) -> np.ndarray:
        return 1.0 / self.p

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "return_period_years", "z_metres"])
        for p, z in zip(self.p, self.z):
            w.writerow([f"{p:.6g}", f"{1.0 / p:.6f}", f"{z:.6f}"])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {"variant": self.variant, "month": self.month, "year": self.year,
                "p": [float(v) for v in self.p], "z": [float(v) for v in self.z]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


DEFAULT_P = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 1e-4)


def return_level_curve(spec: VariantSpec, p=DEFAULT_P, month: int | None = None,
                       year: int | None = None) -> ReturnLevelCurve:
    p = np.sort(np.asarray(p, dtype=float))[::-1]
    z = np.array([return_level(spec, float(q), month=month, year=year) for q in p])
    return ReturnLevelCurve(p, z, spec.variant, month, year)


def empirical_return_levels(maxima, variant: str = "empirical", month: int | None = None) -> ReturnLevelCurve:
    """Observed maxima with Weibull plotting positions ``i / (n + 1)``.

    The ``i``-th largest maximum is assigned exceedance probability
    ``i / (n + 1)``.
    """
    m = np.asarray(maxima, dtype=float)
    m = m[np.isfinite(m)]
    if m.size == 0:
        raise ValueError("no finite maxima supplied")
    z = np.sort(m)[::-1]
    p = np.arange(1, z.size + 1) / (z.size + 1)
    return ReturnLevelCurve(p[::-1], z[::-1], variant, month)


def observed_maxima(records, month: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Annual (or month ``month``) maxima of observed sea level per year.

    Returns ``(years, maxima)`` for years with any observation in scope.
    """
    level = records.sea_level
    ok = np.isfinite(level)
    if month is not None:
        ok &= records.month == month
    years = np.unique(records.year[ok])
    maxima = np.array([level[ok & (records.year == y)].max() for y in years])
    return years, maxima


def month_of_maximum(records) -> tuple[np.ndarray, np.ndarray]:
    """Year and calendar month in which each annual maximum sea level occurred."""
    level = records.sea_level
    ok = np.isfinite(level)
    years = np.unique(records.year[ok])
    months = []
    for y in years:
        idx = np.flatnonzero(ok & (records.year == y))
        months.append(records.month[idx[np.argmax(level[idx])]])
    return years, np.array(months)


def month_occurrence_probs(spec: VariantSpec, z: float) -> np.ndarray:
    """Probability that an annual maximum equal to ``z`` falls in each month.

    Per year, ``A_j = sum_i f(z - X_i) theta(z - X_i) / F(z - X_i)`` over
    the month's cycles; the month shares ``A_j / sum A`` are averaged over
    the tidal sample years.
    """
    cov, bound, key = spec._cycles
    y = z - cov.tide
    F = bound.cdf(y)
    f = bound.pdf(y)
    theta = theta_eval(spec.exi, y) if spec.exi is not None else np.ones(y.shape)
    ok = F > 0
    ratio = np.where(ok, f * theta / np.where(ok, F, 1.0), 0.0)
    A = np.bincount(key, weights=ratio, minlength=12 * spec.K).reshape(spec.K, 12)
    tot = A.sum(axis=1)
    if not np.any(tot > 0):
        raise ValueError(f"level {z:.4f} lies below the support of every month")
    good = tot > 0
    return (A[good] / tot[good, None]).mean(axis=0)
