"""Simplex search with restarts and finite-difference derivatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize


class FitError(RuntimeError):
    """Raised when a likelihood fit fails to converge.

    Carries the best point found and the finite-difference gradient norm
    there so callers can decide whether to retry.
    """

    def __init__(self, message: str, best_x=None, grad_norm: float = float("nan")):
        super().__init__(message)
        self.best_x = best_x
        self.grad_norm = grad_norm


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_restarts: int


def _simplex(x0: np.ndarray, steps: np.ndarray) -> np.ndarray:
    n = x0.size
    sim = np.tile(x0, (n + 1, 1))
    sim[1:] += np.diag(steps)
    return sim


def nelder_mead_multistart(
    fun: Callable[[np.ndarray], float],
    starts: list[np.ndarray],
    steps: np.ndarray,
    *,
    xatol: float = 1e-9,
    fatol: float = 1e-10,
    maxiter: int | None = None,
) -> SimplexResult:
    """Minimise ``fun`` from each start, then polish the best with fresh simplices.

    ``steps`` sets the initial simplex edge per coordinate. Non-finite
    objective values are treated as rejected points.
    """
    steps = np.asarray(steps, dtype=float)
    n = steps.size
    maxiter = maxiter or 2000 * n

    def safe(x):
        v = fun(x)
        return v if np.isfinite(v) else np.inf

    best = None
    for x0 in starts:
        x0 = np.asarray(x0, dtype=float)
        if not np.isfinite(safe(x0)):
            continue
        res = minimize(safe, x0, method="Nelder-Mead",
                       options={"initial_simplex": _simplex(x0, steps), "xatol": xatol,
                                "fatol": fatol, "maxiter": maxiter, "maxfev": 2 * maxiter})
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("objective is not finite at any starting point", best_x=starts[0] if starts else None)

    # restart from the optimum until the simplex stops moving
    x, f = best.x, best.fun
    converged = bool(best.success)
    for _ in range(4):
        res = minimize(safe, x, method="Nelder-Mead",
                       options={"initial_simplex": _simplex(x, 0.1 * steps), "xatol": xatol,
                                "fatol": fatol, "maxiter": maxiter, "maxfev": 2 * maxiter})
        converged = bool(res.success)
        gain = f - res.fun
        if res.fun < f:
            x, f = res.x, res.fun
        if gain <= 1e-9 * max(1.0, abs(f)):
            break
    return SimplexResult(x=x, fun=float(f), converged=converged, n_restarts=len(starts))


def fd_step(x: np.ndarray, rel: float = 1e-4) -> np.ndarray:
    return rel * (1.0 + np.abs(x))


def fd_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x, rel)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h[i])
    return g


def fd_hessian(fun: Callable[[np.ndarray], float], x: np.ndarray, rel: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian with step ``rel * (1 + |x|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = fd_step(x, rel)
    f0 = fun(x)
    H = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (fun(x + ei) - 2 * f0 + fun(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def hessian_ci(fun: Callable[[np.ndarray], float], x: np.ndarray, level_z: float = 1.959963984540054):
    """Covariance and normal-theory intervals from the observed information."""
    H = fd_hessian(fun, x)
    if not np.all(np.isfinite(H)):
        cov = np.full((x.size, x.size), np.nan)
    else:
        try:
            cov = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            cov = np.linalg.pinv(H)
    se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    return cov, x - level_z * se, x + level_z * se
