"""Stationary-bootstrap return-level intervals and probability-integral-transform checks."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import kstest

from .ingest import Records
from .maxima import VariantSpec, annual_max_cdf, year_specific_cdf
from .pipeline import FittedPipeline, PipelineConfig, fit_pipeline
from .surgedist.model import SurgeDistribution

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.2
EXACT_KS_MAX_N = 35


@dataclass(frozen=True)
class BootstrapConfig:
    n_reps: int = 200
    mean_block: float = 10.0
    seed: int = 0
    prior: tuple[float, float] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.n_reps < 2:
            raise ValueError("at least two bootstrap replicates are required")
        if self.mean_block < 1:
            raise ValueError("mean block length must be at least 1")


def stationary_bootstrap(n: int, mean_block: float, seed: int | np.random.Generator) -> np.ndarray:
    """Index sequence of a circular stationary bootstrap resample of length ``n``.

    Blocks start at uniform positions and have geometric lengths on
    ``{1, 2, ...}`` with success probability ``1 / mean_block``.
    """
    if n < 1:
        raise ValueError("series must be nonempty")
    if mean_block < 1:
        raise ValueError("mean block length must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = 1.0 / mean_block
    # draw enough blocks in one go, topping up in the rare case they fall short
    starts, lengths, total = [], [], 0
    while total < n:
        m = int(np.ceil((n - total) * p * 1.2)) + 4
        ln = rng.geometric(p, size=m)
        st = rng.integers(0, n, size=m)
        starts.append(st)
        lengths.append(ln)
        total += int(ln.sum())
    starts = np.concatenate(starts)
    lengths = np.concatenate(lengths)
    stop = int(np.searchsorted(np.cumsum(lengths), n)) + 1
    starts, lengths = starts[:stop], lengths[:stop]
    block_id = np.repeat(np.arange(stop), lengths)[:n]
    offset = np.arange(n) - np.repeat(np.cumsum(lengths) - lengths, lengths)[:n]
    return (starts[block_id] + offset) % n


def ks_pvalue(u) -> float:
    """Kolmogorov-Smirnov test of uniformity; exact for small samples."""
    u = np.asarray(u, dtype=float)
    method = "exact" if u.size <= EXACT_KS_MAX_N else "asymp"
    return float(kstest(u, "uniform", method=method).pvalue)


@dataclass(frozen=True)
class PitSeries:
    u: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)
    years: np.ndarray
    year_p: np.ndarray
    p_value: float

    def to_dict(self) -> dict:
        return {
            "n": int(self.u.size),
            "p_value": self.p_value,
            "per_year": [{"year": int(y), "p_value": float(p)} for y, p in zip(self.years, self.year_p)],
        }


def pit_transform(model: SurgeDistribution, records: Records) -> PitSeries:
    """Transform observed surges through the model CDF at their own covariates."""
    obs = np.flatnonzero(records.observed)
    cov = records.covariates().take(obs)
    u = np.clip(model.bind(cov).cdf(records.skew_surge[obs]), 0.0, 1.0)
    yr = records.year[obs]
    years = np.unique(yr)
    year_p = np.array([ks_pvalue(u[yr == y]) for y in years])
    return PitSeries(u, obs, years, year_p, ks_pvalue(u))


@dataclass(frozen=True)
class BootstrapResult:
    p: np.ndarray
    z_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    replicates: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    n_failed: int = 0

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "z_hat", "lo95", "hi95"])
        for row in zip(self.p, self.z_hat, self.lower, self.upper):
            w.writerow([f"{row[0]:.6g}"] + [f"{v:.6f}" for v in row[1:]])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "p": self.p.tolist(),
            "z_hat": self.z_hat.tolist(),
            "lo95": self.lower.tolist(),
            "hi95": self.upper.tolist(),
            "xi": self.xi.tolist(),
            "n_failed": self.n_failed,
        }


def resample_records(fit: FittedPipeline, records: Records, pit: PitSeries, mean_block: float,
                     seed: int) -> Records:
    """One bootstrap record set: resampled PIT values inverted at the original covariates."""
    idx = stationary_bootstrap(pit.u.size, mean_block, seed)
    cov = records.covariates().take(pit.index)
    y = records.skew_surge.copy()
    y[pit.index] = fit.surge.bind(cov).ppf(pit.u[idx])
    return records.with_surges(y)


def _replicate(args):
    fit, records, pit, p, mean_block, seed, config = args
    try:
        boot = resample_records(fit, records, pit, mean_block, seed)
        refit = fit_pipeline(boot, fit.spec.tides, config, exi_template=fit.exi)
        z = refit.return_levels(p)
        return z, refit.surge.tail.values.get("xi", np.nan), None
    except Exception as exc:  # a failed replicate is dropped, not fatal
        return None, np.nan, f"{type(exc).__name__}: {exc}"


def bootstrap_return_levels(fit: FittedPipeline, records: Records, config: BootstrapConfig, p) -> BootstrapResult:
    """Percentile intervals for return levels from a stationary bootstrap of the PIT series.

    Each replicate resamples the transformed surges in blocks, maps them
    back through the original model at the original covariates and refits
    thresholds, body, tail, rate and extremal index before recomputing the
    return levels. Replicate ``b`` uses seed ``config.seed ^ b``. Interval
    ends are empirical quantiles of the replicates (order statistics, so two
    replicates give their minimum and maximum).
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    pit = pit_transform(fit.surge, records)
    cfg = fit.config if config.prior is None else PipelineConfig(**{**fit.config.__dict__, "prior": config.prior})
    z_hat = fit.return_levels(p) if config.prior is None else fit_pipeline(
        records, fit.spec.tides, cfg, exi_template=fit.exi).return_levels(p)
    jobs = [(fit, records, pit, p, config.mean_block, config.seed ^ b, cfg) for b in range(config.n_reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            results = list(ex.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]
    reps, xis, failed = [], [], 0
    for b, (z, xi, err) in enumerate(results):
        if z is None:
            failed += 1
            logger.warning("bootstrap replicate %d dropped: %s", b, err)
            continue
        reps.append(z)
        xis.append(xi)
    if failed > MAX_FAILURE_FRACTION * config.n_reps:
        raise RuntimeError(f"{failed} of {config.n_reps} bootstrap replicates failed")
    reps = np.array(reps)
    lo, hi = np.percentile(reps, [2.5, 97.5], axis=0, method="inverted_cdf")
    return BootstrapResult(p, z_hat, lo, hi, reps, np.array(xis), failed)


@dataclass(frozen=True)
class PPData:
    empirical: np.ndarray
    model: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_csv(self) -> str:
        rows = ["empirical,model,lo95,hi95"]
        rows += [f"{e:.6f},{m:.6f},{lo:.6f},{hi:.6f}"
                 for e, m, lo, hi in zip(self.empirical, self.model, self.lower, self.upper)]
        return "\n".join(rows) + "\n"


def pp_plot_data(maxima, spec: VariantSpec, mode: str = "pooled", years=None) -> PPData:
    """Probability-probability pairs for observed annual maxima with 95% tolerance bounds.

    In ``year_specific`` mode each maximum is transformed by the annual
    distribution of its own tidal year; ``years`` gives the calendar year
    of each maximum and must be present in the tidal samples.
    """
    m = np.asarray(maxima, dtype=float)
    if m.size < 5:
        raise ValueError("at least 5 annual maxima are required")
    if mode == "pooled":
        probs = np.asarray(annual_max_cdf(spec, m))
    elif mode == "year_specific":
        if years is None:
            raise ValueError("year_specific mode needs the year of each maximum")
        lookup = {int(y.year): k for k, y in enumerate(spec.tides.years)}
        missing = sorted({int(y) for y in years} - set(lookup))
        if missing:
            raise ValueError(f"years {missing} are not in the tidal samples")
        probs = np.array([year_specific_cdf(spec, lookup[int(y)], z) for y, z in zip(years, m)])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n = m.size
    i = np.arange(1, n + 1)
    return PPData(i / (n + 1), np.sort(probs), beta_dist.ppf(0.025, i, n + 1 - i),
                  beta_dist.ppf(0.975, i, n + 1 - i))
