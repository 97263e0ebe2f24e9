"""Diagnostics for surge-tide dependence and temporal extremal dependence."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kstest, linregress, norm, rankdata

from .ingest import Records
from .pipeline import SITE_PRESETS
from .uncertainty import stationary_bootstrap

MIN_EXCEEDANCES = 20
MIN_AD_SAMPLE = 5
MIN_BLOCKS = 5


def _pairs(tides, surges) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(tides, dtype=float)
    y = np.asarray(surges, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    return x[ok], y[ok]


def _rank_ks(x, y, q) -> tuple[float, int]:
    u = np.quantile(y, q)
    exc = y > u
    r = (rankdata(x)[exc] - 0.5) / x.size
    return float(kstest(r, "uniform").pvalue), int(exc.sum())


def ranked_tide_uniformity(tides, surges, q: float = 0.95, expected_block: float = 10.0,
                           n_boot: int = 100, seed: int = 0) -> tuple[float, float]:
    """KS test that peak-tide ranks at surge exceedances are uniform.

    Under independence the ranks (scaled by the number of cycles) of the
    tides at which surges exceed their ``q`` quantile are uniform. The
    returned pair is the raw p-value and the average p-value over
    ``n_boot`` stationary-bootstrap resamples of the (tide, surge) pairs,
    which carries the temporal dependence of both series.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be at least 1")
    x, y = _pairs(tides, surges)
    raw, n_exc = _rank_ks(x, y, q)
    if n_exc < MIN_EXCEEDANCES:
        raise ValueError(f"{n_exc} exceedances of the {q} quantile; at least {MIN_EXCEEDANCES} required")
    ps = []
    for b in range(n_boot):
        idx = stationary_bootstrap(x.size, expected_block, seed + b)
        ps.append(_rank_ks(x[idx], y[idx], q)[0])
    return raw, float(np.mean(ps))


def _adinf(z: float) -> float:
    """Limiting distribution of the Anderson-Darling statistic (Marsaglia and Marsaglia, 2004)."""
    if z <= 0:
        return 0.0
    if z < 2:
        return z ** -0.5 * np.exp(-1.2337141 / z) * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (
            0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    return float(np.exp(-np.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z)
                                                     * z) * z) * z)))


def _adinf_sf(z: float) -> float:
    if z < 2:
        return 1.0 - _adinf(z)
    g = 1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z
    return float(-np.expm1(-np.exp(g)))


def ad_statistic(a, b) -> float:
    """Two-sample Anderson-Darling statistic allowing ties (midrank form)."""
    samples = [np.asarray(a, dtype=float), np.asarray(b, dtype=float)]
    pooled = np.sort(np.concatenate(samples))
    N = pooled.size
    zstar, counts = np.unique(pooled, return_counts=True)
    B = np.cumsum(counts) - counts / 2.0
    total = 0.0
    for s in samples:
        s = np.sort(s)
        M = np.searchsorted(s, zstar, side="right") - (
            np.searchsorted(s, zstar, side="right") - np.searchsorted(s, zstar, side="left")) / 2.0
        inner = counts * (N * M - s.size * B) ** 2 / (B * (N - B) - N * counts / 4.0)
        total += inner.sum() / s.size
    return float(total * (N - 1) / N ** 2)


def ad_variance(n1: int, n2: int) -> float:
    """Finite-sample variance of the two-sample statistic under the null."""
    k = 2
    N = n1 + n2
    H = 1.0 / n1 + 1.0 / n2
    inv = 1.0 / np.arange(1, N)
    h = inv.sum()
    # g = sum_{i<j<N} 1 / ((N - i) j)
    tail = np.cumsum(1.0 / (N - np.arange(1, N)))  # tail[j-1] = sum_{i<=j} 1/(N-i)
    g = float(np.sum(inv[1:] * tail[:-1]))
    a = (4 * g - 6) * (k - 1) + (10 - 6 * g) * H
    b = (2 * g - 4) * k ** 2 + 8 * h * k + (2 * g - 14 * h - 4) * H - 8 * h + 4 * g - 6
    c = (6 * h + 2 * g - 2) * k ** 2 + (4 * h - 4 * g + 6) * k + (2 * h - 6) * H + 4 * h
    d = (2 * h + 6) * k ** 2 - 4 * h * k
    return float((a * N ** 3 + b * N ** 2 + c * N + d) / ((N - 1) * (N - 2) * (N - 3)))


@dataclass(frozen=True)
class ADResult:
    statistic: float
    standardized: float
    p_value: float


def ad_two_sample(all_tides, extreme_tides) -> ADResult:
    """Two-sample Anderson-Darling comparison with an asymptotic p-value."""
    a = np.asarray(all_tides, dtype=float)
    b = np.asarray(extreme_tides, dtype=float)
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    if min(a.size, b.size) < MIN_AD_SAMPLE:
        raise ValueError(f"Anderson-Darling test needs at least {MIN_AD_SAMPLE} values per sample")
    A2 = ad_statistic(a, b)
    sd = np.sqrt(ad_variance(a.size, b.size))
    return ADResult(A2, (A2 - 1.0) / sd, _adinf_sf(A2))


def extreme_tides(tides, surges, q: float = 0.95) -> np.ndarray:
    x, y = _pairs(tides, surges)
    return x[y > np.quantile(y, q)]


def ad_by_month(records: Records, q: float = 0.95) -> np.ndarray:
    """Per-month AD p-values comparing all tides with tides at monthly surge exceedances."""
    ok = records.observed & np.isfinite(records.peak_tide)
    out = np.full(12, np.nan)
    for j in range(1, 13):
        sel = ok & (records.month == j)
        x, y = records.peak_tide[sel], records.skew_surge[sel]
        ext = x[y > np.quantile(y, q)]
        out[j - 1] = ad_two_sample(x, ext).p_value
    return out


@dataclass(frozen=True)
class BlockTrend:
    slope: float
    p_value: float
    quantiles: np.ndarray = field(repr=False)


def quantile_block_trend(tides, surges, block_size: int = 100, q: float = 0.95) -> BlockTrend:
    """Trend in the surge ``q`` quantile across blocks of ordered peak tides.

    Cycles are sorted by peak tide and grouped into consecutive blocks of
    ``block_size``; a final partial block shorter than half a block is
    dropped. The slope of the block quantiles on block index is tested
    with the usual least-squares t statistic.
    """
    x, y = _pairs(tides, surges)
    ys = y[np.argsort(x, kind="stable")]
    n_full, rem = divmod(ys.size, block_size)
    edges = [i * block_size for i in range(n_full + 1)]
    if rem >= block_size / 2:
        edges.append(ys.size)
    qs = np.array([np.quantile(ys[a:b], q) for a, b in zip(edges[:-1], edges[1:])])
    if qs.size < MIN_BLOCKS:
        raise ValueError(f"only {qs.size} blocks of size {block_size}; at least {MIN_BLOCKS} required")
    fit = linregress(np.arange(1, qs.size + 1), qs)
    return BlockTrend(float(fit.slope), float(fit.pvalue), qs)


@dataclass(frozen=True)
class ChiEstimate:
    lag: int
    q: float
    chi: float
    chibar: float
    chi_ci: tuple[float, float]
    chibar_ci: tuple[float, float]
    no_joint: bool = False


def chi_chibar(surges, lag: int, q: float = 0.95) -> ChiEstimate:
    """Empirical ``chi`` and ``chibar`` at lag ``lag`` and quantile level ``q``.

    Both margins are taken over the same pairs ``(Y_i, Y_{i+lag})`` with
    neither value missing. With no joint exceedance ``chi`` is zero and
    ``chibar`` uses half a joint count, flagged by ``no_joint``.
    """
    y = np.asarray(surges, dtype=float)
    if lag < 1:
        raise ValueError("lag must be at least 1")
    if y.size <= lag + 50:
        raise ValueError(f"series length {y.size} must exceed lag + 50")
    a, b = y[:-lag], y[lag:]
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    u = np.quantile(y[np.isfinite(y)], q)
    n = a.size
    ea = a > u
    joint = int(np.sum(ea & (b > u)))
    marg = int(np.sum(ea))
    if marg == 0:
        raise ValueError(f"no exceedances of the {q} quantile")
    chi = joint / marg
    z = norm.ppf(0.975)
    # Wilson interval for the conditional proportion
    centre = (chi + z * z / (2 * marg)) / (1 + z * z / marg)
    half = z * np.sqrt(chi * (1 - chi) / marg + z * z / (4 * marg * marg)) / (1 + z * z / marg)
    chi_ci = (max(0.0, centre - half), min(1.0, centre + half))
    pj = max(joint, 0.5) / n
    pm = marg / n
    lj, lm = np.log(pj), np.log(pm)
    chibar = float(np.clip(2 * lm / lj - 1, -1 + 1e-12, 1.0))
    # delta method on both log-probabilities
    var_lj = (1 - pj) / (n * pj)
    var_lm = (1 - pm) / (n * pm)
    se = np.sqrt((2 / lj) ** 2 * var_lm + (2 * lm / lj ** 2) ** 2 * var_lj)
    chibar_ci = (max(-1.0, chibar - z * se), min(1.0, chibar + z * se))
    return ChiEstimate(lag, q, float(chi), chibar, chi_ci, chibar_ci, joint == 0)


def acf_block_size(surges, cutoff: float = 0.1, max_lag: int = 500) -> int:
    """First lag at which the sample autocorrelation of surges falls below ``cutoff``."""
    y = np.asarray(surges, dtype=float)
    y = y[np.isfinite(y)]
    y = y - y.mean()
    n = y.size
    f = np.fft.rfft(y, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[: min(max_lag, n - 1) + 1]
    acf = acov / acov[0]
    below = np.flatnonzero(acf < cutoff)
    return int(below[0]) if below.size else int(max_lag)


def default_block_size(records: Records, site: str | None = None) -> int:
    if site is not None and site.lower() in SITE_PRESETS:
        return SITE_PRESETS[site.lower()]["block_size"]
    return max(1, acf_block_size(records.skew_surge))


@dataclass(frozen=True)
class DependenceReport:
    q: float
    block: int
    ks_p: float
    ks_boot_p: float
    ad: ADResult
    ad_monthly: np.ndarray
    trend: BlockTrend
    chi: tuple[ChiEstimate, ...]

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "expected_block": self.block,
            "ks_uniformity": {"p_value": self.ks_p, "bootstrap_mean_p": self.ks_boot_p},
            "anderson_darling": {"statistic": self.ad.statistic, "standardized": self.ad.standardized,
                                 "p_value": self.ad.p_value},
            "anderson_darling_monthly": [float(p) for p in self.ad_monthly],
            "quantile_block_trend": {"slope": self.trend.slope, "p_value": self.trend.p_value,
                                     "quantiles": self.trend.quantiles.tolist()},
            "chi": [{"lag": c.lag, "q": c.q, "chi": c.chi, "chibar": c.chibar, "chi_ci": list(c.chi_ci),
                     "chibar_ci": list(c.chibar_ci), "no_joint": c.no_joint} for c in self.chi],
        }

    def table(self) -> str:
        lines = [
            f"{'test':<34}{'value':>14}",
            f"{'KS ranked tide p (q=' + format(self.q, 'g') + ')':<34}{self.ks_p:>14.3g}",
            f"{'  bootstrap mean p (block ' + str(self.block) + ')':<34}{self.ks_boot_p:>14.3g}",
            f"{'Anderson-Darling p':<34}{self.ad.p_value:>14.3g}",
            f"{'quantile block slope':<34}{self.trend.slope:>14.3g}",
            f"{'  slope p':<34}{self.trend.p_value:>14.3g}",
        ]
        for j, p in enumerate(self.ad_monthly, start=1):
            lines.append(f"{'AD p month ' + str(j):<34}{p:>14.3g}")
        for c in self.chi:
            lines.append(f"{'chi / chibar lag ' + str(c.lag):<34}{c.chi:>7.3f}{c.chibar:>7.3f}")
        return "\n".join(lines)


def dependence_report(records: Records, q: float = 0.95, site: str | None = None, n_boot: int = 100,
                      block_size: int = 100, lags=(1, 2, 5, 10), seed: int = 0) -> DependenceReport:
    block = default_block_size(records, site)
    x, y = records.peak_tide, records.skew_surge
    raw, boot = ranked_tide_uniformity(x, y, q, block, n_boot, seed)
    ad = ad_two_sample(_pairs(x, y)[0], extreme_tides(x, y, q))
    return DependenceReport(q, block, raw, boot, ad, ad_by_month(records, q),
                            quantile_block_trend(x, y, block_size, q),
                            tuple(chi_chibar(y, lag, q) for lag in lags))
