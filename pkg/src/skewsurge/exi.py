"""Subasymptotic extremal index: runs and intervals estimators and a level-dependent model.

The model interpolates runs estimates on a grid of surge levels up to a
threshold ``v`` and above it decays exponentially from the runs estimate
at ``v`` towards an asymptote ``theta`` with length scale ``psi``::

    theta(y) = theta - (theta - theta_v) exp(-(y - v) / psi),   y > v.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

GRID_SIZE = 200
MIN_FIT_POINTS = 5


class NoExceedanceError(ValueError):
    def __init__(self, level: float):
        super().__init__(f"no observations exceed level {level:.6g}")
        self.level = level


def _exceedance_index(surges, y) -> np.ndarray:
    s = np.asarray(surges, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.flatnonzero(s > y)


def theta_runs(surges, y: float, r: int) -> tuple[float, int]:
    """Runs estimate of the extremal index at level ``y`` with run length ``r``.

    A new cluster starts whenever at least ``r`` non-exceedances separate
    consecutive exceedances. Missing values (NaN) count as non-exceedances.
    Returns ``(theta, n_clusters)``.
    """
    if r < 1:
        raise ValueError("run length must be at least 1")
    idx = _exceedance_index(surges, y)
    if idx.size == 0:
        raise NoExceedanceError(y)
    clusters = 1 + int(np.sum(np.diff(idx) > r))
    return clusters / idx.size, clusters


def runs_curve(surges, levels, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Runs estimates and cluster counts at each level (NaN and 0 where nothing exceeds)."""
    s = np.asarray(surges, dtype=float)
    s = np.where(np.isnan(s), -np.inf, s)
    levels = np.asarray(levels, dtype=float)
    theta = np.full(levels.size, np.nan)
    counts = np.zeros(levels.size, dtype=int)
    for i, y in enumerate(levels):
        idx = np.flatnonzero(s > y)
        if idx.size:
            counts[i] = 1 + int(np.sum(np.diff(idx) > r))
            theta[i] = counts[i] / idx.size
    return theta, counts


def theta_intervals(surges, y: float) -> float:
    """Intervals estimator of the extremal index from interexceedance times.

    Uses the bias-corrected form when the largest gap exceeds two and the
    simple form otherwise, clamped to ``(0, 1]``.
    """
    idx = _exceedance_index(surges, y)
    if idx.size < 2:
        raise ValueError(f"intervals estimator needs at least 2 exceedances of {y:.6g}; found {idx.size}")
    t = np.diff(idx).astype(float)
    n = t.size
    if t.max() <= 2:
        est = 2.0 * t.sum() ** 2 / (n * np.sum(t * t))
    else:
        est = 2.0 * np.sum(t - 1) ** 2 / (n * np.sum((t - 1) * (t - 2)))
    return float(min(1.0, est))


@dataclass(frozen=True)
class ExiModel:
    """Fitted level-dependent extremal index ``theta(y, r)``."""

    r: int
    v: float
    theta_v: float
    theta: float
    psi: float
    grid: np.ndarray = field(repr=False)
    grid_theta: np.ndarray = field(repr=False)
    grid_counts: np.ndarray = field(repr=False)

    @classmethod
    def independent(cls) -> "ExiModel":
        """Model returning one at every level."""
        g = np.array([0.0])
        return cls(r=1, v=np.inf, theta_v=1.0, theta=1.0, psi=1.0, grid=g, grid_theta=np.ones(1),
                   grid_counts=np.ones(1, dtype=int))

    @property
    def is_independent(self) -> bool:
        return self.theta == 1.0 and self.theta_v == 1.0 and np.all(self.grid_theta == 1.0)

    def __call__(self, y) -> np.ndarray:
        return theta_eval(self, y)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "v": self.v,
            "theta_v": self.theta_v,
            "theta": self.theta,
            "psi": self.psi,
            "grid": self.grid.tolist(),
            "grid_theta": self.grid_theta.tolist(),
            "grid_counts": self.grid_counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExiModel":
        return cls(int(d["r"]), float(d["v"]), float(d["theta_v"]), float(d["theta"]), float(d["psi"]),
                   np.array(d["grid"], float), np.array(d["grid_theta"], float), np.array(d["grid_counts"], int))


def theta_eval(model: ExiModel, y) -> np.ndarray:
    """Evaluate the extremal index model at levels ``y``.

    Below ``v`` the grid estimates are linearly interpolated (constant
    beyond the lowest grid level); above ``v`` the exponential approach to
    the asymptote is used. The value at ``v`` is the runs estimate there.
    """
    y = np.asarray(y, dtype=float)
    if model.is_independent:
        return np.ones(y.shape)
    below = model.grid <= model.v
    xs = np.append(model.grid[below], model.v)
    ys = np.append(model.grid_theta[below], model.theta_v)
    low = np.interp(np.minimum(y, model.v), xs, ys)
    with np.errstate(over="ignore"):
        high = model.theta - (model.theta - model.theta_v) * np.exp(-(y - model.v) / model.psi)
    return np.where(y > model.v, high, low)


def _decay(y, v, theta_v, theta, psi):
    return theta - (theta - theta_v) * np.exp(-(y - v) / psi)


def fit_exi_curve(levels, theta_tilde, counts, v: float, theta_v: float) -> tuple[float, float]:
    """Weighted least-squares fit of ``(theta, psi)`` to runs estimates above ``v``.

    Weights are ``c - 1`` (the square of ``sqrt(c - 1)``). For fixed ``psi``
    the optimal ``theta`` is available in closed form and clipped to
    ``[theta_v, 1]``; ``psi`` is then profiled on the log scale.
    """
    levels = np.asarray(levels, dtype=float)
    tt = np.asarray(theta_tilde, dtype=float)
    w = np.asarray(counts, dtype=float) - 1.0
    sel = (levels > v) & np.isfinite(tt)
    y, tt, w = levels[sel], tt[sel], np.maximum(w[sel], 0.0)
    if np.count_nonzero(w > 0) < MIN_FIT_POINTS:
        if np.all(w == 0):
            raise ValueError("all weights are zero above v: every level has a single cluster")
        raise ValueError(f"only {np.count_nonzero(w > 0)} weighted grid points above v; "
                         f"{MIN_FIT_POINTS} required")

    def best_theta(psi):
        g = 1.0 - np.exp(-(y - v) / psi)
        # model = theta_v + (theta - theta_v) g, linear in theta
        den = np.sum(w * g * g)
        th = theta_v + np.sum(w * g * (tt - theta_v)) / den if den > 0 else theta_v
        return float(np.clip(th, theta_v, 1.0))

    def loss(log_psi):
        psi = np.exp(log_psi)
        th = best_theta(psi)
        return float(np.sum(w * (tt - _decay(y, v, theta_v, th, psi)) ** 2))

    span = max(y.max() - v, 1e-6)
    lo, hi = np.log(span * 1e-4), np.log(span * 1e3)
    grid = np.linspace(lo, hi, 121)
    vals = np.array([loss(g) for g in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(loss, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    log_psi = res.x if res.fun <= vals[i] else grid[i]
    psi = float(np.exp(log_psi))
    return best_theta(psi), psi


def exi_grid(surges, n: int = GRID_SIZE, lower: float | None = None) -> np.ndarray:
    """Regular grid of levels from the lowest to the highest observed surge."""
    s = np.asarray(surges, dtype=float)
    s = s[np.isfinite(s)]
    lo = float(s.min()) if lower is None else float(lower)
    return np.linspace(lo, float(s.max()), n)


def fit_exi_model(surges, r: int, v: float | None = None, grid=None, v_quantile: float = 0.99) -> ExiModel:
    """Fit the extremal index model to a surge series.

    Parameters
    ----------
    surges
        Surge series in time order; NaN marks missing cycles.
    r
        Run length in cycles.
    v
        Threshold above which the parametric decay applies; defaults to the
        ``v_quantile`` quantile of the observed surges.
    grid
        Levels at which runs estimates are computed; defaults to 200
        equally spaced levels spanning the observed surges.
    """
    s = np.asarray(surges, dtype=float)
    obs = s[np.isfinite(s)]
    v = float(np.quantile(obs, v_quantile)) if v is None else float(v)
    grid = exi_grid(obs) if grid is None else np.asarray(grid, dtype=float)
    theta_v, _ = theta_runs(s, v, r)
    tt, counts = runs_curve(s, grid, r)
    theta, psi = fit_exi_curve(grid, tt, counts, v, theta_v)
    # levels above the sample maximum carry no estimate; hold the last value
    filled = tt.copy()
    good = np.isfinite(filled)
    if not good.all():
        filled[~good] = filled[good][-1] if good.any() else 1.0
    return ExiModel(r=int(r), v=v, theta_v=float(theta_v), theta=theta, psi=psi, grid=grid,
                    grid_theta=filled, grid_counts=counts)
