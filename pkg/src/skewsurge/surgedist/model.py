"""Composite skew-surge distribution: empirical body below ``u_j``, GPD tail above."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from ..ingest import Covariates, MonthlyThresholds, Records, compute_thresholds, record_hash
from . import gpd
from .body import EmpiricalBody, build_body
from .rate import RateFit, RateParams, eval_lambda, fit_rate
from .tail import TailFit, TailModelSpec, TailParams, eval_sigma, fit_tail

#: named combinations of tail model, rate model and body structure
PRESETS = {
    "stationary": dict(tail="stationary", rate="constant", banded=False, pooled=True),
    "seasonal": dict(tail="S2", rate="R0", banded=False, pooled=False),
    "interaction": dict(tail="S4", rate="R1", banded=True, pooled=False),
}


class BoundDistribution:
    """Surge distribution evaluated at a fixed set of ``n`` covariate contexts.

    Every method takes ``y`` broadcastable to ``(..., n)``; the last axis
    is matched with the bound contexts.
    """

    n: int

    def cdf(self, y):
        raise NotImplementedError

    def logcdf(self, y):
        with np.errstate(divide="ignore"):
            return np.log(self.cdf(y))

    def pdf(self, y):
        raise NotImplementedError

    def ppf(self, v):
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        """Lower end point of the surge support and a generous upper search bound."""
        raise NotImplementedError


class SurgeDistribution:
    """Anything that can be bound to covariates and evaluated as a surge law."""

    tide_dependent: bool = False

    def bind(self, cov: Covariates) -> BoundDistribution:
        raise NotImplementedError

    def cdf(self, y, cov: Covariates):
        return self.bind(cov).cdf(y)

    def pdf(self, y, cov: Covariates):
        return self.bind(cov).pdf(y)

    def ppf(self, v, cov: Covariates):
        return self.bind(cov).ppf(v)


class BoundSurge(BoundDistribution):
    def __init__(self, body: EmpiricalBody, u, lam, sigma, xi, group):
        self.body = body
        self.u, self.lam, self.sigma, self.xi = u, lam, sigma, xi
        self.group = group
        self.n = u.size
        self._members = [(g, np.flatnonzero(group == g)) for g in np.unique(group)]

    def _per_group(self, y, fn):
        out = np.empty(y.shape)
        for g, idx in self._members:
            out[..., idx] = fn(y[..., idx], g, idx)
        return out

    def _ecdf(self, y):
        def f(yy, g, _):
            s = self.body.samples[g]
            return np.searchsorted(s, yy, side="right") / s.size
        return self._per_group(y, f)

    def _kde(self, y):
        def f(yy, g, idx):
            s = self.body.samples[g]
            h = self.body.bandwidths[g]
            u = self.u[idx]
            flat, uu = yy.reshape(-1, 1), np.broadcast_to(u, yy.shape).reshape(-1, 1)
            k = np.exp(-0.5 * ((flat - s) / h) ** 2) + np.exp(-0.5 * ((2 * uu - flat - s) / h) ** 2)
            return (k.sum(axis=1) / (s.size * h * np.sqrt(2 * np.pi))).reshape(yy.shape)
        return self._per_group(y, f)

    def cdf(self, y):
        y = np.broadcast_to(np.asarray(y, dtype=float), np.broadcast_shapes(np.shape(y), (self.n,)))
        tail = 1.0 - self.lam * gpd.survival(np.maximum(y - self.u, 0.0), self.sigma, self.xi)
        above = y > self.u
        if np.all(above):
            return tail
        return np.where(above, tail, (1.0 - self.lam) * self._ecdf(y))

    def logcdf(self, y):
        y = np.broadcast_to(np.asarray(y, dtype=float), np.broadcast_shapes(np.shape(y), (self.n,)))
        above = y > self.u
        tail = np.log1p(-self.lam * gpd.survival(np.maximum(y - self.u, 0.0), self.sigma, self.xi))
        if np.all(above):
            return tail
        with np.errstate(divide="ignore"):
            body = np.log1p(-self.lam) + np.log(self._ecdf(y))
        return np.where(above, tail, body)

    def pdf(self, y):
        y = np.broadcast_to(np.asarray(y, dtype=float), np.broadcast_shapes(np.shape(y), (self.n,)))
        above = y > self.u
        tail = self.lam * gpd.density(np.maximum(y - self.u, 0.0), self.sigma, self.xi)
        if np.all(above):
            return tail
        return np.where(above, tail, (1.0 - self.lam) * self._kde(y))

    def ppf(self, v):
        v = np.broadcast_to(np.asarray(v, dtype=float), np.broadcast_shapes(np.shape(v), (self.n,)))
        in_body = v <= 1.0 - self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            tail_p = np.clip((1.0 - v) / self.lam, 0.0, 1.0)
            tail = self.u + gpd.quantile_excess(tail_p, self.sigma, self.xi)

        def f(w, g, idx):
            s = self.body.samples[g]
            k = np.ceil(w / (1.0 - self.lam[idx]) * s.size - 1e-9).astype(int) - 1
            return s[np.clip(k, 0, s.size - 1)]
        body = self._per_group(v, f)
        return np.where(in_body, body, tail)

    def support(self) -> tuple[float, float]:
        scale = np.max(self.sigma / np.maximum(np.abs(self.xi), 1.0))
        return self.body.lower, float(np.max(self.u) + 50.0 * scale)


@dataclass(frozen=True)
class SurgeModel(SurgeDistribution):
    """Fitted composite surge model.

    The body CDF is the group empirical CDF rescaled to ``[0, 1 - lambda]``
    so the distribution is continuous at the threshold.
    """

    thresholds: MonthlyThresholds
    body: EmpiricalBody = field(repr=False)
    tail: TailParams
    rate: RateParams
    prior: tuple[float, float] | None = None
    tail_fit: TailFit | None = field(default=None, repr=False)
    rate_fit: RateFit | None = field(default=None, repr=False)
    data_hash: str | None = None

    @property
    def tide_in_scale(self) -> bool:
        return self.tail.spec.uses_tide

    @property
    def tide_in_rate(self) -> bool:
        return self.rate.uses_tide

    @property
    def banded_body(self) -> bool:
        return self.body.banded

    @property
    def tide_dependent(self) -> bool:
        return self.tide_in_scale or self.tide_in_rate or self.banded_body

    @property
    def seasonal(self) -> bool:
        return not self.thresholds.pooled

    @property
    def nll(self) -> float:
        return sum(f.nll for f in (self.tail_fit, self.rate_fit) if f is not None)

    @property
    def k(self) -> int:
        return sum(f.k for f in (self.tail_fit, self.rate_fit) if f is not None)

    @property
    def aic(self) -> float:
        return sum(f.aic for f in (self.tail_fit, self.rate_fit) if f is not None)

    @property
    def bic(self) -> float:
        return sum(f.bic for f in (self.tail_fit, self.rate_fit) if f is not None)

    def bind(self, cov: Covariates) -> BoundSurge:
        month = np.asarray(cov.month)
        return BoundSurge(
            self.body,
            u=self.thresholds.for_months(month),
            lam=eval_lambda(self.rate, cov),
            sigma=eval_sigma(self.tail, cov),
            xi=self.tail.xi(cov),
            group=self.body.group(month, cov.tide),
        )

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.to_dict(),
            "tail": self.tail.to_dict(),
            "rate": self.rate.to_dict(),
            "body": {**self.body.to_dict(), "data_hash": self.data_hash},
            "flags": {"tide_in_scale": self.tide_in_scale, "tide_in_rate": self.tide_in_rate,
                      "banded_body": self.banded_body},
            "prior": list(self.prior) if self.prior else None,
            "tail_fit": self.tail_fit.to_dict() if self.tail_fit else None,
            "rate_fit": self.rate_fit.to_dict() if self.rate_fit else None,
            "nll": self.nll,
            "aic": self.aic,
            "bic": self.bic,
            "data_hash": self.data_hash,
        }

    @classmethod
    def from_dict(cls, d: dict, records: Records) -> "SurgeModel":
        """Rebuild a model from :meth:`to_dict` output and the records it was fitted to."""
        h = record_hash(records)
        if d.get("data_hash") and d["data_hash"] != h:
            raise ValueError("records do not match the data hash stored with the model")
        thr = MonthlyThresholds.from_dict(d["thresholds"])
        obs = records.observed
        body = build_body(records.skew_surge[obs], records.month[obs], records.peak_tide[obs], thr.u,
                          banded=d["flags"]["banded_body"], pooled=thr.pooled)
        prior = tuple(d["prior"]) if d.get("prior") else None
        return cls(thr, body, TailParams.from_dict(d["tail"]), RateParams.from_dict(d["rate"]), prior,
                   data_hash=h)


def fit_surge_model(
    records: Records,
    preset: str | None = "seasonal",
    *,
    tail: str | None = None,
    rate: str | None = None,
    banded: bool | None = None,
    q_u: float = 0.95,
    prior: tuple[float, float] | None = None,
    thresholds: MonthlyThresholds | None = None,
    seed: int = 0,
) -> SurgeModel:
    """Fit thresholds, body, tail and rate models to observed surges.

    ``preset`` picks a named combination (``stationary``, ``seasonal`` or
    ``interaction``); ``tail``, ``rate`` and ``banded`` override its parts.
    """
    cfg = dict(PRESETS[preset]) if preset else dict(PRESETS["seasonal"])
    for key, val in (("tail", tail), ("rate", rate), ("banded", banded)):
        if val is not None:
            cfg[key] = val
    pooled = cfg["pooled"]
    thr = thresholds or compute_thresholds(records, q_u=q_u, pooled=pooled)
    obs = records.observed
    y = records.skew_surge[obs]
    cov = records.covariates().take(obs)
    u = thr.for_months(cov.month)
    exceed = y > u
    body = build_body(y, cov.month, cov.tide, thr.u, banded=cfg["banded"], pooled=pooled)
    tail_fit = fit_tail(TailModelSpec(cfg["tail"]), (y - u)[exceed], cov.take(exceed), prior=prior, seed=seed)
    all_tides = records.peak_tide[~np.isnan(records.peak_tide)]
    rate_fit = fit_rate(cfg["rate"], exceed, cov, base_rate=1.0 - thr.q,
                        tide_mean=float(all_tides.mean()), tide_sd=float(all_tides.std()))
    return SurgeModel(thr, body, tail_fit.params, rate_fit.params, prior, tail_fit, rate_fit, record_hash(records))


# -- model comparison -------------------------------------------------------

#: (restricted, general) pairs for which a likelihood ratio test is valid
NESTED = {
    ("stationary", "S0"), ("stationary", "S1"), ("stationary", "S2"), ("stationary", "S3"),
    ("stationary", "S4"), ("S1", "S0"), ("S2", "S3"), ("S2", "S4"),
    ("constant", "R0"), ("constant", "R1"), ("R0", "R1"),
}


@dataclass(frozen=True)
class LrtResult:
    restricted: str
    general: str
    statistic: float
    df: int
    p_value: float


def lrt(restricted, general) -> LrtResult:
    """Likelihood ratio test between nested fits on the same data."""
    pair = (restricted.name, general.name)
    if pair not in NESTED:
        raise ValueError(f"models {pair[0]} and {pair[1]} are not nested; likelihood ratio test undefined")
    if restricted.n != general.n:
        raise ValueError("fits use different data")
    stat = 2.0 * (restricted.nll - general.nll)
    df = general.k - restricted.k
    return LrtResult(pair[0], pair[1], float(stat), int(df), float(chi2.sf(max(stat, 0.0), df)))


@dataclass(frozen=True)
class Ranking:
    names: tuple[str, ...]
    aic: tuple[float, ...]
    bic: tuple[float, ...]
    delta_aic: tuple[float, ...]
    delta_bic: tuple[float, ...]
    lrts: tuple[LrtResult, ...]

    def to_dict(self) -> dict:
        return {
            "models": [
                {"name": n, "aic": a, "bic": b, "delta_aic": da, "delta_bic": db}
                for n, a, b, da, db in zip(self.names, self.aic, self.bic, self.delta_aic, self.delta_bic)
            ],
            "lrt": [r.__dict__ for r in self.lrts],
        }


def model_select(fits: list) -> Ranking:
    """Rank fits by AIC, reporting BIC and LRTs for every nested pair present."""
    if len({f.n for f in fits}) > 1:
        raise ValueError("model selection requires fits on identical data")
    order = sorted(fits, key=lambda f: f.aic)
    a0 = order[0].aic
    b0 = min(f.bic for f in fits)
    tests = tuple(lrt(r, g) for r in fits for g in fits if (r.name, g.name) in NESTED)
    return Ranking(
        names=tuple(f.name for f in order),
        aic=tuple(f.aic for f in order),
        bic=tuple(f.bic for f in order),
        delta_aic=tuple(f.aic - a0 for f in order),
        delta_bic=tuple(f.bic - b0 for f in order),
        lrts=tests,
    )
