"""Synthetic peak tides and skew surges drawn from a known truth.

Peak tides follow a spring-neap envelope with optional nodal, seasonal and
diurnal-inequality modulation. Surges are drawn by inverting a composite
truth distribution (truncated normal body, GPD tail) at uniforms from a
max-autoregressive process, whose extremal index is ``theta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .ingest import TIDAL_PERIOD_HOURS, Covariates, Records
from .surgedist import gpd
from .surgedist.model import BoundDistribution, SurgeDistribution
from .surgedist.rate import RateParams, eval_lambda
from .surgedist.tail import TailParams, _valid_region

SPRING_NEAP_DAYS = 14.765
NODAL_YEARS = 18.61
DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class TideConfig:
    """Peak-tide generator: ``mean + envelope(t)`` with multiplicative modulations."""

    mean: float = 5.0
    m2: float = 3.0
    s2: float = 1.0
    nodal: float = 0.037
    seasonal: float = 0.05
    diurnal: float = 0.1

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cycle_times(start_year: int, years: int) -> np.ndarray:
    """Tidal-cycle peak times covering ``years`` calendar years from ``start_year``."""
    start = np.datetime64(f"{start_year}-01-01T03:00:00", "s")
    stop = np.datetime64(f"{start_year + years}-01-01T00:00:00", "s")
    period = np.timedelta64(int(round(TIDAL_PERIOD_HOURS * 3600)), "s")
    n = int((stop - start) / period) + 1
    t = start + period * np.arange(n)
    return t[t < stop]


def peak_tides(times: np.ndarray, config: TideConfig = TideConfig()) -> np.ndarray:
    days = (times - np.datetime64("2000-01-01T00:00:00", "s")).astype(float) / 86400.0
    envelope = np.sqrt(config.m2 ** 2 + config.s2 ** 2
                       + 2 * config.m2 * config.s2 * np.cos(2 * np.pi * days / SPRING_NEAP_DAYS))
    envelope = envelope * (1 + config.nodal * np.cos(2 * np.pi * days / (NODAL_YEARS * DAYS_PER_YEAR)))
    envelope = envelope * (1 + config.seasonal * np.cos(4 * np.pi * days / DAYS_PER_YEAR))
    alternate = np.where(np.arange(times.size) % 2 == 0, 1.0, -1.0)
    return config.mean + envelope + config.diurnal * alternate


def tide_moments(config: TideConfig = TideConfig(), years: int = 19, start_year: int = 1970) -> tuple[float, float]:
    """Mean and standard deviation of generated peak tides over ``years`` years."""
    x = peak_tides(cycle_times(start_year, years), config)
    return float(x.mean()), float(x.std())


class _BoundTruth(BoundDistribution):
    def __init__(self, mu, s, zq, u, lam, sigma, xi):
        self.mu, self.s, self.zq, self.u = mu, s, zq, u
        self.lam, self.sigma, self.xi = lam, sigma, xi
        self.q = ndtr(zq)
        self.n = u.size

    def _shape(self, y):
        return np.broadcast_to(np.asarray(y, dtype=float), np.broadcast_shapes(np.shape(y), (self.n,)))

    def cdf(self, y):
        y = self._shape(y)
        body = (1 - self.lam) * ndtr((y - self.mu) / self.s) / self.q
        tail = 1 - self.lam * gpd.survival(np.maximum(y - self.u, 0.0), self.sigma, self.xi)
        return np.where(y > self.u, tail, body)

    def logcdf(self, y):
        from scipy.special import log_ndtr

        y = self._shape(y)
        body = np.log1p(-self.lam) + log_ndtr((y - self.mu) / self.s) - np.log(self.q)
        tail = np.log1p(-self.lam * gpd.survival(np.maximum(y - self.u, 0.0), self.sigma, self.xi))
        return np.where(y > self.u, tail, body)

    def pdf(self, y):
        y = self._shape(y)
        z = (y - self.mu) / self.s
        body = (1 - self.lam) * np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * self.s * self.q)
        tail = self.lam * gpd.density(np.maximum(y - self.u, 0.0), self.sigma, self.xi)
        return np.where(y > self.u, tail, body)

    def ppf(self, v):
        v = self._shape(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            body = self.mu + self.s * ndtri(np.clip(v / (1 - self.lam), 0, 1) * self.q)
            tail = self.u + gpd.quantile_excess(np.clip((1 - v) / self.lam, 0, 1), self.sigma, self.xi)
        return np.where(v <= 1 - self.lam, body, tail)

    def support(self) -> tuple[float, float]:
        scale = np.max(self.sigma / np.maximum(np.abs(self.xi), 1.0))
        return float(np.min(self.mu - 10 * self.s)), float(np.max(self.u) + 50 * scale)


@dataclass(frozen=True)
class TruthSurgeModel(SurgeDistribution):
    """Known composite surge law used to simulate data and compute true levels.

    Below the monthly threshold ``u_j`` the surge is a normal law with mean
    ``mu_j`` truncated at its ``q`` quantile; its scale is chosen so the
    density is continuous at ``u_j`` for the month-average GPD scale.
    """

    tail: TailParams
    rate: RateParams
    q: float = 0.95
    mu: np.ndarray = field(default_factory=lambda: np.zeros(12))
    reference_tide: float = 5.0

    def __post_init__(self):
        if not _valid_region(self.tail.spec, self.tail.theta):
            raise ValueError(f"truth tail parameters {self.tail.values} give a non-positive scale "
                             "or shape below -1")
        if abs(self.rate.base_rate - (1 - self.q)) > 1e-12:
            raise ValueError("truth base exceedance rate must equal 1 - q")

    @property
    def tide_dependent(self) -> bool:
        return self.tail.spec.uses_tide or self.rate.uses_tide

    @property
    def body_scale(self) -> np.ndarray:
        doy = np.arange(1, 366)
        month = np.searchsorted(np.cumsum([31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]), doy - 1,
                                side="right") + 1
        cov = Covariates(doy, month, np.ones_like(doy), np.full(doy.size, self.reference_tide))
        sig = self.tail.sigma(cov)
        sbar = np.array([sig[month == j].mean() for j in range(1, 13)])
        zq = ndtri(self.q)
        return sbar * np.exp(-0.5 * zq * zq) / np.sqrt(2 * np.pi) / (1 - self.q)

    @property
    def thresholds(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float) + ndtri(self.q) * self.body_scale

    def bind(self, cov: Covariates) -> _BoundTruth:
        m = np.asarray(cov.month) - 1
        sigma = self.tail.sigma(cov)
        if np.any(sigma <= 0):
            raise ValueError("truth GPD scale is not positive at some covariate context")
        return _BoundTruth(np.asarray(self.mu, dtype=float)[m], self.body_scale[m], ndtri(self.q),
                           self.thresholds[m], eval_lambda(self.rate, cov), sigma, self.tail.xi(cov))

    def to_dict(self) -> dict:
        return {"tail": self.tail.to_dict(), "rate": self.rate.to_dict(), "q": self.q,
                "mu": [float(v) for v in self.mu], "reference_tide": self.reference_tide}


def armax_uniforms(n: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform margins of ``W_i = max(a W_{i-1}, (1 - a) Z_i)`` with unit Frechet ``Z``.

    The process has extremal index ``theta = 1 - a``; ``theta = 1`` gives
    independent uniforms.
    """
    if not 0 < theta <= 1:
        raise ValueError("extremal index must lie in (0, 1]")
    if theta == 1:
        return rng.random(n)
    a = 1.0 - theta
    z = -1.0 / np.log(rng.random(n))
    w = np.empty(n)
    prev = z[0]
    w[0] = prev
    for i in range(1, n):
        prev = max(a * prev, theta * z[i])
        w[i] = prev
    return np.exp(-1.0 / w)


@dataclass(frozen=True)
class SimulationConfig:
    truth: TruthSurgeModel
    years: int = 50
    start_year: int = 1970
    tide: TideConfig = TideConfig()
    theta: float = 1.0
    missing_fraction: float = 0.0
    seed: int = 0


def simulate_records(config: SimulationConfig) -> Records:
    """Draw one synthetic record set; deterministic given ``config.seed``."""
    if config.years < 1:
        raise ValueError("at least one year must be simulated")
    if not 0 <= config.missing_fraction < 1:
        raise ValueError("missing fraction must lie in [0, 1)")
    rng = np.random.default_rng(config.seed)
    t = cycle_times(config.start_year, config.years)
    x = peak_tides(t, config.tide)
    rec = Records.from_arrays(t, x, np.zeros(t.size))
    u = armax_uniforms(t.size, config.theta, rng)
    y = config.truth.bind(rec.covariates()).ppf(u)
    if config.missing_fraction > 0:
        y = np.where(rng.random(t.size) < config.missing_fraction, np.nan, y)
    return rec.with_surges(y)


def heysham_like_truth(tail: str = "S2", rate: str = "R0", tide: TideConfig = TideConfig(),
                       **rate_terms: float) -> TruthSurgeModel:
    """Truth with the published Heysham S2 scale parameters and a mild rate harmonic.

    ``rate_terms`` override the rate coefficients (e.g. ``alpha_x=-0.32``
    with ``rate="R1"``). Tide standardisation uses the generator's moments.
    """
    tail_values = {"alpha": 0.14, "beta": 0.060, "phi": 271.51, "xi": 0.002}
    if tail == "S4":
        tail_values["gamma"] = 0.0
    mean, sd = tide_moments(tide)
    rate_values = {"beta": 0.01, "phi": 30.0, **rate_terms}
    return TruthSurgeModel(
        TailParams.from_values(tail, **tail_values),
        RateParams(rate, 0.05, tide_mean=mean, tide_sd=sd, **rate_values),
        q=0.95,
        reference_tide=mean,
    )
