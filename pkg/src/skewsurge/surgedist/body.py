"""Empirical distribution of surges at or below the monthly threshold."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

BAND_QUANTILES = (0.33, 0.67)


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 1e-6
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * x.size ** (-0.2)
    return float(h) if h > 0 else 1e-6


@dataclass(frozen=True)
class EmpiricalBody:
    """Per-month (optionally per tide band) samples of sub-threshold surges.

    ``samples[g]`` is a sorted sample for group ``g``; groups are indexed
    ``3 * (month - 1) + band`` when banded and ``month - 1`` otherwise. A
    pooled body has a single group shared by all months.
    """

    samples: tuple[np.ndarray, ...] = field(repr=False)
    bandwidths: np.ndarray
    thresholds: np.ndarray
    cuts: np.ndarray | None = None
    pooled: bool = False

    @property
    def banded(self) -> bool:
        return self.cuts is not None

    def group(self, month, tide) -> np.ndarray:
        month = np.asarray(month)
        if self.pooled:
            return np.zeros(month.shape, dtype=int)
        if not self.banded:
            return month - 1
        c = self.cuts[month - 1]
        x = np.asarray(tide, dtype=float)
        band = (x > c[:, 0]).astype(int) + (x > c[:, 1]).astype(int)
        return 3 * (month - 1) + band

    def ecdf(self, y, group) -> np.ndarray:
        """Right-continuous empirical CDF of each point's own group sample."""
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape)
        for g in np.unique(group):
            sel = group == g
            s = self.samples[g]
            out[sel] = np.searchsorted(s, y[sel], side="right") / s.size
        return out

    def kde(self, y, group, u) -> np.ndarray:
        """Gaussian kernel density reflected about the threshold ``u``.

        Reflection keeps all kernel mass below ``u`` so the density
        integrates to one over the body.
        """
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.zeros(y.shape)
        for g in np.unique(group):
            sel = group == g
            s = self.samples[g]
            h = self.bandwidths[g]
            yy, uu = y[sel][:, None], u[sel][:, None]
            dens = norm.pdf((yy - s) / h) + norm.pdf((2 * uu - yy - s) / h)
            out[sel] = dens.sum(axis=1) / (s.size * h)
        return np.where(y <= u, out, 0.0)

    def quantile(self, w, group) -> np.ndarray:
        """Generalised inverse: smallest sample value with ECDF >= w."""
        w = np.asarray(w, dtype=float)
        out = np.empty(w.shape)
        for g in np.unique(group):
            sel = group == g
            s = self.samples[g]
            idx = np.ceil(w[sel] * s.size - 1e-9).astype(int) - 1
            out[sel] = s[np.clip(idx, 0, s.size - 1)]
        return out

    @property
    def lower(self) -> float:
        return float(min(s[0] for s in self.samples))

    def to_dict(self) -> dict:
        return {
            "n": [int(s.size) for s in self.samples],
            "bandwidths": [float(h) for h in self.bandwidths],
            "cuts": None if self.cuts is None else self.cuts.tolist(),
            "pooled": self.pooled,
        }


def build_body(surge, month, tide, thresholds: np.ndarray, banded: bool = False,
               pooled: bool = False) -> EmpiricalBody:
    """Collect sub-threshold surges per month, tide band or pooled.

    Tide band cut points are the 0.33 and 0.67 quantiles of that month's
    peak tides over all observed cycles.
    """
    y = np.asarray(surge, dtype=float)
    month = np.asarray(month)
    x = np.asarray(tide, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    below = y <= thresholds[month - 1]
    cuts = None
    if pooled:
        groups = [np.sort(y[below])]
    elif banded:
        cuts = np.array([np.quantile(x[month == j], BAND_QUANTILES) for j in range(1, 13)])
        probe = EmpiricalBody((), np.empty(0), thresholds, cuts)
        gid = probe.group(month, x)
        groups = [np.sort(y[below & (gid == g)]) for g in range(36)]
    else:
        groups = [np.sort(y[below & (month == j)]) for j in range(1, 13)]
    for g, s in enumerate(groups):
        if s.size == 0:
            raise ValueError(f"body group {g} has no sub-threshold surges")
    h = np.array([silverman_bandwidth(s) for s in groups])
    return EmpiricalBody(tuple(groups), h, thresholds, cuts, pooled)
