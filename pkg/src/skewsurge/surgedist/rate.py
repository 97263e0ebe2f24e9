"""Logistic models for the probability that a surge exceeds its monthly threshold.

``constant``
    ``lambda_d = lambda`` everywhere.
``R0``
    ``logit lambda_d = logit lambda + (d_j - dbar_j) beta sin(w (d - phi))``.
``R1``
    R0 plus ``z [alpha_x + beta_x sin(w (d - phi_x))]`` with the standardised
    peak tide ``z = (x - xbar) / s_x``.

The intercept ``logit lambda`` is held fixed at ``logit(1 - q_u)``; the
remaining terms are linear in ``(a, b)`` harmonic coefficients, so the fit
is a logistic regression with an offset solved by Newton's method.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logit

from .._optim import FitError, hessian_ci
from ..ingest import PERIODICITY, Covariates

OMEGA = 2.0 * np.pi / PERIODICITY
RATE_VARIANTS = ("constant", "R0", "R1")
_NAMES = {
    "constant": (),
    "R0": ("beta", "phi"),
    "R1": ("beta", "phi", "alpha_x", "beta_x", "phi_x"),
}


class SeparationError(FitError):
    """Exceedance indicators are perfectly separated by the covariates."""


@dataclass(frozen=True)
class RateParams:
    variant: str
    base_rate: float
    beta: float = 0.0
    phi: float = 0.0
    alpha_x: float = 0.0
    beta_x: float = 0.0
    phi_x: float = 0.0
    tide_mean: float = 0.0
    tide_sd: float = 1.0

    def __post_init__(self):
        if self.variant not in RATE_VARIANTS:
            raise ValueError(f"unknown rate variant {self.variant!r}; expected one of {RATE_VARIANTS}")
        if not 0 < self.base_rate < 1:
            raise ValueError("base exceedance rate must lie in (0, 1)")
        if self.tide_sd <= 0:
            raise ValueError("peak tide standard deviation must be positive")

    @property
    def names(self) -> tuple[str, ...]:
        return _NAMES[self.variant]

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def values(self) -> dict[str, float]:
        return {n: float(getattr(self, n)) for n in self.names}

    @property
    def uses_tide(self) -> bool:
        return self.variant == "R1"

    def linear_predictor(self, cov: Covariates) -> np.ndarray:
        eta = np.full(len(cov), logit(self.base_rate))
        if self.variant == "constant":
            return eta
        d = np.asarray(cov.doy, dtype=float)
        eta = eta + cov.day_offset * self.beta * np.sin(OMEGA * (d - self.phi))
        if self.variant == "R1":
            z = (np.asarray(cov.tide, dtype=float) - self.tide_mean) / self.tide_sd
            eta = eta + z * (self.alpha_x + self.beta_x * np.sin(OMEGA * (d - self.phi_x)))
        return eta

    def to_dict(self) -> dict:
        return {"variant": self.variant, "base_rate": self.base_rate, **self.values,
                "tide_mean": self.tide_mean, "tide_sd": self.tide_sd}

    @classmethod
    def from_dict(cls, d: dict) -> "RateParams":
        return cls(**d)


def eval_lambda(params: RateParams, cov: Covariates) -> np.ndarray:
    """Exceedance probability for each covariate context."""
    return expit(params.linear_predictor(cov))


def _design(variant: str, cov: Covariates, tide_mean: float, tide_sd: float) -> np.ndarray:
    w = OMEGA * np.asarray(cov.doy, dtype=float)
    s, c = np.sin(w), -np.cos(w)
    o = np.asarray(cov.day_offset, dtype=float)
    cols = [o * s, o * c]
    if variant == "R1":
        z = (np.asarray(cov.tide, dtype=float) - tide_mean) / tide_sd
        cols += [z, z * s, z * c]
    return np.column_stack(cols)


def _to_reported(variant: str, coef: np.ndarray) -> np.ndarray:
    out = [np.hypot(coef[0], coef[1]), np.mod(np.arctan2(coef[1], coef[0]) / OMEGA, PERIODICITY)]
    if variant == "R1":
        out += [coef[2], np.hypot(coef[3], coef[4]), np.mod(np.arctan2(coef[4], coef[3]) / OMEGA, PERIODICITY)]
    return np.array(out)


def _to_internal(variant: str, rep: np.ndarray) -> np.ndarray:
    out = [rep[0] * np.cos(OMEGA * rep[1]), rep[0] * np.sin(OMEGA * rep[1])]
    if variant == "R1":
        out += [rep[2], rep[3] * np.cos(OMEGA * rep[4]), rep[3] * np.sin(OMEGA * rep[4])]
    return np.array(out)


def _bernoulli_nll(eta: np.ndarray, v: np.ndarray) -> float:
    return float(-np.sum(v * log_expit(eta) + (1 - v) * log_expit(-eta)))


@dataclass(frozen=True)
class RateFit:
    params: RateParams
    nll: float
    n: int
    ci_lower: dict = field(repr=False)
    ci_upper: dict = field(repr=False)

    @property
    def name(self) -> str:
        return self.params.variant

    @property
    def k(self) -> int:
        return self.params.n_params

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
            "ci95": {n: [self.ci_lower[n], self.ci_upper[n]] for n in self.params.names},
        }


def fit_rate(variant: str, exceed, cov: Covariates, base_rate: float,
             tide_mean: float | None = None, tide_sd: float | None = None,
             max_iter: int = 100) -> RateFit:
    """Maximum likelihood fit of an exceedance-rate model.

    Parameters
    ----------
    variant
        ``"constant"``, ``"R0"`` or ``"R1"``.
    exceed
        Indicator (0/1) that each cycle's surge exceeds its monthly threshold.
    cov
        Covariates of every cycle.
    base_rate
        Fixed mean monthly exceedance rate, normally ``1 - q_u``.
    tide_mean, tide_sd
        Standardisation of peak tide for R1; default to the sample moments.
    """
    v = np.asarray(exceed, dtype=float)
    if v.size == 0:
        raise ValueError("no exceedance indicators supplied")
    if np.all(v == v[0]):
        raise SeparationError(f"all exceedance indicators equal {int(v[0])}; rate model is not identifiable")
    tm = float(np.mean(cov.tide)) if tide_mean is None else float(tide_mean)
    ts = float(np.std(cov.tide)) if tide_sd is None else float(tide_sd)
    if variant == "R1" and not ts > 0:
        raise ValueError("peak tide has zero spread; R1 is not identifiable")
    ts = ts if ts > 0 else 1.0
    offset = logit(base_rate)
    if variant == "constant":
        params = RateParams("constant", base_rate, tide_mean=tm, tide_sd=ts)
        return RateFit(params, _bernoulli_nll(np.full(v.size, offset), v), v.size, {}, {})
    if variant not in ("R0", "R1"):
        raise ValueError(f"unknown rate variant {variant!r}")

    X = _design(variant, cov, tm, ts)
    coef = np.zeros(X.shape[1])
    nll = _bernoulli_nll(offset + X @ coef, v)
    for _ in range(max_iter):
        eta = offset + X @ coef
        p = expit(eta)
        grad = X.T @ (p - v)
        H = (X * (p * (1 - p))[:, None]).T @ X
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError("singular information matrix in rate fit") from exc
        # halve the step until the likelihood improves
        t = 1.0
        while True:
            trial = coef - t * step
            new = _bernoulli_nll(offset + X @ trial, v)
            if new <= nll + 1e-12 or t < 1e-8:
                break
            t *= 0.5
        coef, delta, nll = trial, nll - new, new
        if np.max(np.abs(coef)) > 50.0:
            raise SeparationError("rate coefficients diverge; exceedances are separated by covariates")
        if np.max(np.abs(t * step)) < 1e-10 or abs(delta) < 1e-13:
            break
    else:
        raise FitError(f"{variant} rate fit did not converge in {max_iter} iterations", best_x=coef,
                       grad_norm=float(np.linalg.norm(grad)))

    rep = _to_reported(variant, coef)

    def nll_rep(r):
        return _bernoulli_nll(offset + X @ _to_internal(variant, r), v)

    _, lo, hi = hessian_ci(nll_rep, rep)
    names = _NAMES[variant]
    params = RateParams(variant, base_rate, tide_mean=tm, tide_sd=ts, **dict(zip(names, map(float, rep))))
    return RateFit(params, float(nll), v.size, dict(zip(names, map(float, lo))), dict(zip(names, map(float, hi))))
