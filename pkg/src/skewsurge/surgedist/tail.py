"""Covariate generalised Pareto tail models for skew-surge threshold excesses.

Variants:

``stationary``
    constant scale and shape (2 parameters).
``S0`` / ``S1``
    a scale per month; per-month (S0, 24) or common (S1, 13) shape.
``S2``
    one annual harmonic on the scale, common shape (4).
``S3``
    annual plus semi-annual harmonics (6).
``S4``
    S2 plus a linear peak-tide term on the scale (5).

The scale is linear in the internal coefficient vector, so every variant
is handled through a design matrix. Harmonics are optimised as
``(a, b) = beta * (cos(w phi), sin(w phi))`` to avoid the phase wrap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .._optim import FitError, fd_gradient, hessian_ci, nelder_mead_multistart
from ..ingest import PERIODICITY, Covariates
from . import gpd

OMEGA = 2.0 * np.pi / PERIODICITY
TAIL_VARIANTS = ("stationary", "S0", "S1", "S2", "S3", "S4")
_MONTHS = range(1, 13)

_NAMES = {
    "stationary": ("sigma", "xi"),
    "S0": tuple(f"sigma_{j}" for j in _MONTHS) + tuple(f"xi_{j}" for j in _MONTHS),
    "S1": tuple(f"sigma_{j}" for j in _MONTHS) + ("xi",),
    "S2": ("alpha", "beta", "phi", "xi"),
    "S3": ("alpha", "beta", "phi", "beta2", "phi2", "xi"),
    "S4": ("alpha", "beta", "phi", "gamma", "xi"),
}


@dataclass(frozen=True)
class TailModelSpec:
    variant: str

    def __post_init__(self):
        if self.variant not in TAIL_VARIANTS:
            raise ValueError(f"unknown tail variant {self.variant!r}; expected one of {TAIL_VARIANTS}")

    @property
    def names(self) -> tuple[str, ...]:
        return _NAMES[self.variant]

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def n_xi(self) -> int:
        return 12 if self.variant == "S0" else 1

    @property
    def shape_policy(self) -> str:
        return "per-month" if self.variant == "S0" else "common"

    @property
    def harmonic(self) -> bool:
        return self.variant in ("S2", "S3", "S4")

    @property
    def uses_tide(self) -> bool:
        return self.variant == "S4"

    def sigma_design(self, cov: Covariates) -> np.ndarray:
        n = len(cov)
        if self.variant == "stationary":
            return np.ones((n, 1))
        if self.variant in ("S0", "S1"):
            return (np.asarray(cov.month)[:, None] == np.arange(1, 13)[None, :]).astype(float)
        w = OMEGA * np.asarray(cov.doy, dtype=float)
        cols = [np.ones(n), np.sin(w), -np.cos(w)]
        if self.variant == "S3":
            cols += [np.sin(2 * w), -np.cos(2 * w)]
        if self.variant == "S4":
            cols.append(np.asarray(cov.tide, dtype=float))
        return np.column_stack(cols)

    def xi_design(self, cov: Covariates) -> np.ndarray:
        if self.variant == "S0":
            return (np.asarray(cov.month)[:, None] == np.arange(1, 13)[None, :]).astype(float)
        return np.ones((len(cov), 1))

    # -- parameter maps -------------------------------------------------
    def to_internal(self, reported: np.ndarray) -> np.ndarray:
        r = np.asarray(reported, dtype=float).copy()
        if not self.harmonic:
            return r
        out = r.copy()
        out[1], out[2] = r[1] * np.cos(OMEGA * r[2]), r[1] * np.sin(OMEGA * r[2])
        if self.variant == "S3":
            out[3], out[4] = r[3] * np.cos(2 * OMEGA * r[4]), r[3] * np.sin(2 * OMEGA * r[4])
        return out

    def to_reported(self, internal: np.ndarray) -> np.ndarray:
        x = np.asarray(internal, dtype=float).copy()
        if not self.harmonic:
            return x
        out = x.copy()
        out[1] = np.hypot(x[1], x[2])
        out[2] = np.mod(np.arctan2(x[2], x[1]) / OMEGA, PERIODICITY)
        if self.variant == "S3":
            out[3] = np.hypot(x[3], x[4])
            out[4] = np.mod(np.arctan2(x[4], x[3]) / (2 * OMEGA), PERIODICITY / 2)
        return out

    def split(self, internal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return internal[: self.n_params - self.n_xi], internal[self.n_params - self.n_xi:]


@dataclass(frozen=True)
class TailParams:
    """Fitted or specified tail parameters, stored in internal coordinates."""

    spec: TailModelSpec
    theta: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, variant: str, **values: float) -> "TailParams":
        """Build from reported values, e.g. ``from_values("S2", alpha=0.14, beta=0.06, phi=271.5, xi=0.002)``.

        Omitted harmonic or tide terms default to zero.
        """
        spec = TailModelSpec(variant)
        defaults = {"beta": 0.0, "phi": 0.0, "beta2": 0.0, "phi2": 0.0, "gamma": 0.0}
        missing = [n for n in spec.names if n not in values and n not in defaults]
        if missing:
            raise ValueError(f"missing tail parameters for {variant}: {missing}")
        extra = set(values) - set(spec.names)
        if extra:
            raise ValueError(f"unexpected tail parameters for {variant}: {sorted(extra)}")
        reported = np.array([values.get(n, defaults.get(n)) for n in spec.names], dtype=float)
        return cls(spec, spec.to_internal(reported))

    @property
    def variant(self) -> str:
        return self.spec.variant

    @property
    def reported(self) -> np.ndarray:
        return self.spec.to_reported(self.theta)

    @property
    def values(self) -> dict[str, float]:
        return dict(zip(self.spec.names, map(float, self.reported)))

    def sigma(self, cov: Covariates) -> np.ndarray:
        th_s, _ = self.spec.split(self.theta)
        return self.spec.sigma_design(cov) @ th_s

    def xi(self, cov: Covariates) -> np.ndarray:
        _, th_x = self.spec.split(self.theta)
        return self.spec.xi_design(cov) @ th_x

    def to_dict(self) -> dict:
        return {"variant": self.variant, **self.values}

    @classmethod
    def from_dict(cls, d: dict) -> "TailParams":
        d = dict(d)
        return cls.from_values(d.pop("variant"), **d)


def eval_sigma(params: TailParams, cov: Covariates) -> np.ndarray:
    """GPD scale at each covariate context; raises if any scale is not positive."""
    s = params.sigma(cov)
    if np.any(s <= 0):
        raise ValueError(f"non-positive GPD scale (min {s.min():.4g}); parameters outside the valid region")
    return s


def _valid_region(spec: TailModelSpec, theta: np.ndarray) -> bool:
    th_s, th_x = spec.split(theta)
    if np.any(th_x <= -1.0):
        return False
    if spec.variant in ("S2",):
        return th_s[0] > np.hypot(th_s[1], th_s[2])
    if spec.variant == "S3":
        d = np.arange(1, 366)
        w = OMEGA * d
        s = th_s[0] + th_s[1] * np.sin(w) - th_s[2] * np.cos(w) + th_s[3] * np.sin(2 * w) - th_s[4] * np.cos(2 * w)
        return bool(np.all(s > 0))
    return True


class _Objective:
    """Negative log-likelihood over a fixed exceedance sample."""

    def __init__(self, spec: TailModelSpec, excess: np.ndarray, cov: Covariates, prior=None):
        self.spec = spec
        self.excess = np.asarray(excess, dtype=float)
        self.Ds = spec.sigma_design(cov)
        self.Dx = spec.xi_design(cov)
        self.prior = prior

    def nll(self, theta: np.ndarray) -> float:
        if not _valid_region(self.spec, theta):
            return np.inf
        th_s, th_x = self.spec.split(theta)
        sigma = self.Ds @ th_s
        if np.any(sigma <= 0):
            return np.inf
        xi = self.Dx @ th_x
        return float(np.sum(gpd.nll_terms(self.excess, sigma, xi)))

    def penalty(self, theta: np.ndarray) -> float:
        if self.prior is None:
            return 0.0
        mu, sd = self.prior
        _, th_x = self.spec.split(theta)
        return float(np.sum((th_x - mu) ** 2) / (2.0 * sd * sd))

    def __call__(self, theta: np.ndarray) -> float:
        return self.nll(theta) + self.penalty(theta)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        th_s, th_x = self.spec.split(theta)
        sigma = self.Ds @ th_s
        xi = self.Dx @ th_x
        g_s, g_x = gpd.nll_gradients(self.excess, sigma, xi)
        grad = np.concatenate([self.Ds.T @ g_s, self.Dx.T @ g_x])
        if self.prior is not None:
            mu, sd = self.prior
            grad[-self.spec.n_xi:] += (th_x - mu) / (sd * sd)
        return grad


def nll_tail(params: TailParams, excess, cov: Covariates) -> float:
    """Negative log-likelihood of threshold excesses under ``params``.

    Returns +inf when a point lies outside the GPD support or the scale is
    not positive somewhere it is required to be.
    """
    return _Objective(params.spec, excess, cov).nll(params.theta)


def nll_tail_gradient(params: TailParams, excess, cov: Covariates) -> np.ndarray:
    """Analytic gradient of :func:`nll_tail` in internal coordinates."""
    return _Objective(params.spec, excess, cov).gradient(params.theta)


@dataclass(frozen=True)
class TailFit:
    params: TailParams
    nll: float
    n: int
    cov: np.ndarray = field(repr=False)
    ci_lower: dict = field(repr=False)
    ci_upper: dict = field(repr=False)
    converged: bool = True
    prior: tuple[float, float] | None = None

    @property
    def name(self) -> str:
        return self.params.variant

    @property
    def k(self) -> int:
        return self.params.spec.n_params

    @property
    def aic(self) -> float:
        return 2 * self.k + 2 * self.nll

    @property
    def bic(self) -> float:
        return self.k * np.log(self.n) + 2 * self.nll

    def ci(self, name: str) -> tuple[float, float]:
        return self.ci_lower[name], self.ci_upper[name]

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "nll": self.nll,
            "n": self.n,
            "k": self.k,
            "aic": self.aic,
            "bic": self.bic,
            "ci95": {n: [self.ci_lower[n], self.ci_upper[n]] for n in self.params.spec.names},
            "prior": list(self.prior) if self.prior else None,
        }


MIN_EXCEEDANCES = 30


def _starts(spec: TailModelSpec, excess, cov, n_starts, rng):
    s0 = float(np.mean(excess))
    xi0 = 0.05
    tide_sd = float(np.std(cov.tide)) if spec.uses_tide else 1.0
    base = {"stationary": [s0], "S2": [s0, 0.0, 0.0], "S3": [s0, 0.0, 0.0, 0.0, 0.0],
            "S4": [s0, 0.0, 0.0, 0.0]}[spec.variant]
    base = np.array(base + [xi0])
    steps = np.full(base.size, 0.2 * s0)
    steps[-1] = 0.1
    if spec.uses_tide:
        steps[3] = 0.2 * s0 / max(tide_sd, 1e-6)
    starts = [base]
    for _ in range(n_starts - 1):
        jit = base.copy()
        jit[0] *= 1.0 + 0.1 * rng.standard_normal()
        jit[1:-1] += 0.2 * steps[1:-1] * rng.standard_normal(base.size - 2)
        jit[-1] += 0.05 * rng.standard_normal()
        starts.append(jit)
    return starts, steps


def _finish(spec, obj: _Objective, theta, n, converged, prior) -> TailFit:
    reported = spec.to_reported(theta)

    def penalised_reported(r):
        return obj(spec.to_internal(r))

    cov, lo, hi = hessian_ci(penalised_reported, reported)
    names = spec.names
    return TailFit(
        params=TailParams(spec, np.asarray(theta, dtype=float)),
        nll=obj.nll(theta),
        n=n,
        cov=cov,
        ci_lower=dict(zip(names, map(float, lo))),
        ci_upper=dict(zip(names, map(float, hi))),
        converged=converged,
        prior=prior,
    )


def _fit_scale_given_xi(excess, xi):
    """Profile MLE of a stationary GPD scale for fixed shape, on log scale."""
    def f(log_s):
        return float(np.sum(gpd.nll_terms(excess, np.exp(log_s), xi)))
    m = np.log(np.mean(excess))
    lo = np.log(-xi * excess.max()) + 1e-9 if xi < 0 else m - 10.0
    hi = max(m + 5.0, lo + 5.0)
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(np.exp(res.x)), float(res.fun)


def _fit_monthly(spec: TailModelSpec, excess, cov, prior) -> tuple[np.ndarray, bool]:
    months = np.asarray(cov.month)
    groups = [excess[months == j] for j in _MONTHS]
    for j, g in zip(_MONTHS, groups):
        if g.size < 2:
            raise FitError(f"month {j} has {g.size} exceedances; cannot fit a per-month scale")
    mu, sd = prior if prior is not None else (0.0, np.inf)

    profile = lambda xi, g: _fit_scale_given_xi(g, xi)  # noqa: E731

    if spec.variant == "S0":
        sig, xis = [], []
        for g in groups:
            res = minimize_scalar(lambda xi: profile(xi, g)[1] + (xi - mu) ** 2 / (2 * sd * sd),
                                  bounds=(-0.95, 1.5), method="bounded", options={"xatol": 1e-10})
            xis.append(res.x)
            sig.append(profile(res.x, g)[0])
        return np.array(sig + xis), True

    def total(xi):
        return sum(profile(xi, g)[1] for g in groups) + (xi - mu) ** 2 / (2 * sd * sd)

    res = minimize_scalar(total, bounds=(-0.95, 1.5), method="bounded", options={"xatol": 1e-10})
    sig = [profile(res.x, g)[0] for g in groups]
    return np.array(sig + [res.x]), True


def fit_tail(
    spec: TailModelSpec | str,
    excess,
    cov: Covariates,
    prior: tuple[float, float] | None = None,
    n_starts: int = 5,
    seed: int = 0,
) -> TailFit:
    """Maximum (penalised) likelihood fit of a tail model.

    Parameters
    ----------
    spec
        Tail variant or :class:`TailModelSpec`.
    excess
        Threshold excesses ``y - u_j`` (all positive).
    cov
        Covariates of each exceedance.
    prior
        Optional ``(mean, sd)`` of a normal penalty on the shape.

    Harmonic variants use a restarted Nelder-Mead search; the stationary
    and separable monthly variants are profiled over the shape.
    Intervals come from a finite-difference Hessian in reported
    coordinates.
    """
    spec = TailModelSpec(spec) if isinstance(spec, str) else spec
    excess = np.asarray(excess, dtype=float)
    if excess.size < MIN_EXCEEDANCES:
        raise ValueError(f"{excess.size} exceedances supplied; at least {MIN_EXCEEDANCES} required")
    if np.any(excess <= 0):
        raise ValueError("threshold excesses must be positive")
    if prior is not None and not np.isfinite(prior[1]):
        prior = None
    obj = _Objective(spec, excess, cov, prior)

    if spec.variant in ("S0", "S1"):
        theta, converged = _fit_monthly(spec, excess, cov, prior)
        return _finish(spec, obj, theta, excess.size, converged, prior)
    if spec.variant == "stationary":
        mu, sd = prior if prior is not None else (0.0, np.inf)
        res = minimize_scalar(lambda xi: _fit_scale_given_xi(excess, xi)[1] + (xi - mu) ** 2 / (2 * sd * sd),
                              bounds=(-0.95, 1.5), method="bounded", options={"xatol": 1e-10})
        theta = np.array([_fit_scale_given_xi(excess, res.x)[0], res.x])
        return _finish(spec, obj, theta, excess.size, True, prior)

    rng = np.random.default_rng(seed)
    starts, steps = _starts(spec, excess, cov, n_starts, rng)
    # optimise S4 with the tide column centred so the intercept is well conditioned
    shift = float(np.mean(cov.tide)) if spec.uses_tide else 0.0

    def to_theta(z):
        th = np.array(z, dtype=float)
        if spec.uses_tide:
            th[0] -= th[3] * shift
        return th

    res = nelder_mead_multistart(lambda z: obj(to_theta(z)), starts, steps)
    theta = to_theta(res.x)
    if not res.converged or not np.isfinite(res.fun):
        g = fd_gradient(obj, theta) if np.isfinite(res.fun) else np.full(theta.size, np.nan)
        raise FitError(f"{spec.variant} tail fit did not converge after {n_starts} restarts",
                       best_x=spec.to_reported(theta), grad_norm=float(np.linalg.norm(g)))
    if spec.uses_tide:
        sig = obj.Ds @ spec.split(theta)[0]
        if np.any(sig <= 0):
            raise FitError("S4 scale is not positive over the observed tide range", best_x=spec.to_reported(theta))
    return _finish(spec, obj, theta, excess.size, True, prior)
