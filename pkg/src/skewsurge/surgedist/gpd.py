"""Generalised Pareto primitives with a smooth xi -> 0 limit.

All functions broadcast over numpy arrays. ``excess`` is the amount by
which a value exceeds its threshold.
"""
from __future__ import annotations

import numpy as np

#: Below this |xi| the exponential limit is used outright.
XI_ZERO = 1e-8
#: Below this |xi * excess / sigma| series expansions replace log1p ratios.
T_SMALL = 1e-6


def _log1p_ratio(t):
    """log1p(t) / t, continuous at t = 0."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < T_SMALL
    safe = np.where(small, 1.0, t)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log1p(safe) / safe
    return np.where(small, 1.0 - t / 2.0 + t * t / 3.0, out)


def _expm1_ratio(w):
    """expm1(w) / w, continuous at w = 0."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < T_SMALL
    safe = np.where(small, 1.0, w)
    out = np.expm1(safe) / safe
    return np.where(small, 1.0 + w / 2.0 + w * w / 6.0, out)


def log_survival(excess, sigma, xi):
    """log of [1 + xi * excess / sigma]_+^(-1/xi); -inf beyond the upper end point."""
    excess, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (excess, sigma, xi)))
    s = excess / sigma
    t = xi * s
    inside = 1.0 + t > 0
    t_safe = np.where(inside, t, 0.0)
    out = np.where(np.abs(xi) < XI_ZERO, -s, -s * _log1p_ratio(t_safe))
    return np.where(inside, out, -np.inf)


def survival(excess, sigma, xi):
    return np.exp(log_survival(excess, sigma, xi))


def log_density(excess, sigma, xi):
    excess, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (excess, sigma, xi)))
    t = xi * excess / sigma
    inside = (1.0 + t > 0) & (excess >= 0)
    t_safe = np.where(inside, t, 0.0)
    with np.errstate(divide="ignore"):
        out = -np.log(sigma) + log_survival(excess, sigma, xi) - np.where(np.abs(xi) < XI_ZERO, 0.0, np.log1p(t_safe))
    return np.where(inside, out, -np.inf)


def density(excess, sigma, xi):
    return np.exp(log_density(excess, sigma, xi))


def quantile_excess(tail_prob, sigma, xi):
    """Excess with survival probability ``tail_prob`` (inverse of :func:`survival`)."""
    tail_prob, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (tail_prob, sigma, xi)))
    with np.errstate(divide="ignore"):
        m = -np.log(tail_prob)
    return sigma * m * _expm1_ratio(xi * m)


def nll_terms(excess, sigma, xi):
    """Per-point negative log-likelihood; +inf outside the support or for sigma <= 0."""
    excess, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (excess, sigma, xi)))
    ok = sigma > 0
    sig = np.where(ok, sigma, 1.0)
    s = excess / sig
    t = xi * s
    inside = ok & (1.0 + t > 0)
    t_safe = np.where(inside, t, 0.0)
    zero = np.abs(xi) < XI_ZERO
    out = np.log(sig) + np.where(zero, s, s * _log1p_ratio(t_safe) + np.log1p(t_safe))
    return np.where(inside, out, np.inf)


def nll_gradients(excess, sigma, xi):
    """Derivatives of :func:`nll_terms` with respect to sigma and xi."""
    excess, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (excess, sigma, xi)))
    s = excess / sigma
    t = xi * s
    a = 1.0 + t
    d_sigma = 1.0 / sigma - (1.0 + xi) * excess / (sigma ** 2 * a)
    # -log1p(t)/xi^2 + s/(xi (1+t)) written to stay finite as xi -> 0
    small = np.abs(t) < 1e-3
    # outside the support (a <= 0) the derivative is undefined and left as NaN
    t_safe = np.where(small | (a <= 0), 1.0, t)
    xi_safe = np.where(small, 1.0, xi)
    exact = (-np.log1p(t_safe) + t_safe / (1.0 + t_safe)) / xi_safe ** 2
    series = s * s * (-0.5 + 2.0 * t / 3.0 - 0.75 * t * t + 0.8 * t ** 3)
    d_xi = np.where(small, series, exact) + s / a
    d_xi = np.where(a > 0, d_xi, np.nan)
    return d_sigma, d_xi
