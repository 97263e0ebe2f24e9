"""Tidal-cycle records: parsing, calendar covariates, thresholds and tide samples."""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import IO, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

#: Mean semidiurnal (M2) tidal period in hours.
TIDAL_PERIOD_HOURS = 12.4206012
CADENCE_TOLERANCE_HOURS = 2.0
DAYS_IN_MONTH = np.array([31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])
#: Calendar mean day of each month, used to centre day-of-month covariates.
MEAN_DAY_OF_MONTH = (DAYS_IN_MONTH + 1) / 2.0
PERIODICITY = 365.0

_HEADER = ("timestamp", "peak_tide", "skew_surge")


class RecordFormatError(ValueError):
    """Raised when an input CSV row cannot be parsed."""


@dataclass(frozen=True)
class TidalCycleRecord:
    """One tidal cycle: peak tide, skew surge and calendar covariates."""

    timestamp: datetime
    peak_tide: float
    skew_surge: float
    year_index: int
    month: int
    day_of_year: int
    day_of_month: int
    missing: bool

    @property
    def sea_level(self) -> float:
        return self.peak_tide + self.skew_surge

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "peak_tide": self.peak_tide,
            "skew_surge": None if self.missing else self.skew_surge,
            "year_index": self.year_index,
            "month": self.month,
            "day_of_year": self.day_of_year,
            "day_of_month": self.day_of_month,
            "missing": self.missing,
        }


@dataclass(frozen=True)
class Covariates:
    """Vectorised covariate context for a set of tidal cycles.

    ``doy`` is the day of year on a 365-day scale, ``month`` runs 1..12,
    ``dom`` is the calendar day of month and ``tide`` the peak tide in metres.
    """

    doy: np.ndarray
    month: np.ndarray
    dom: np.ndarray
    tide: np.ndarray

    def __post_init__(self):
        n = len(self.doy)
        for name in ("month", "dom", "tide"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"covariate {name!r} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.doy)

    @property
    def day_offset(self) -> np.ndarray:
        """Day of month centred on the calendar mean day of that month."""
        return self.dom - MEAN_DAY_OF_MONTH[self.month - 1]

    def take(self, index) -> "Covariates":
        return Covariates(self.doy[index], self.month[index], self.dom[index], self.tide[index])

    @classmethod
    def single(cls, doy: int, month: int, dom: int, tide: float) -> "Covariates":
        return cls(np.array([doy]), np.array([month]), np.array([dom]), np.array([float(tide)]))


def calendar_covariates(times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (year, month, day_of_year, day_of_month) for datetime64 times.

    Day of year is on a 365-day scale: 29 February shares day 59 with
    28 February and later days in leap years are shifted down by one.
    """
    days = times.astype("datetime64[D]")
    years = days.astype("datetime64[Y]")
    months = days.astype("datetime64[M]")
    year = years.astype(int) + 1970
    month = (months - years.astype("datetime64[M]")).astype(int) + 1
    dom = (days - months.astype("datetime64[D]")).astype(int) + 1
    doy = (days - years.astype("datetime64[D]")).astype(int) + 1
    leap = (year % 4 == 0) & ((year % 100 != 0) | (year % 400 == 0))
    doy = np.where(leap & (doy >= 60), doy - 1, doy)
    return year, month, doy, dom


@dataclass(frozen=True)
class Records:
    """Columnar store of tidal-cycle records, sorted by time.

    Missing skew surges are stored as NaN with ``missing`` set; a missing
    peak tide is NaN in ``peak_tide``.
    """

    time: np.ndarray
    peak_tide: np.ndarray
    skew_surge: np.ndarray
    year: np.ndarray = field(repr=False)
    month: np.ndarray = field(repr=False)
    day_of_year: np.ndarray = field(repr=False)
    day_of_month: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, time, peak_tide, skew_surge) -> "Records":
        time = np.asarray(time, dtype="datetime64[s]")
        if time.size > 1 and np.any(np.diff(time) <= np.timedelta64(0, "s")):
            bad = int(np.flatnonzero(np.diff(time) <= np.timedelta64(0, "s"))[0]) + 1
            raise RecordFormatError(f"timestamps are not strictly increasing at record {bad}")
        year, month, doy, dom = calendar_covariates(time)
        return cls(
            time=time,
            peak_tide=np.asarray(peak_tide, dtype=float),
            skew_surge=np.asarray(skew_surge, dtype=float),
            year=year,
            month=month,
            day_of_year=doy,
            day_of_month=dom,
        )

    def __len__(self) -> int:
        return len(self.time)

    def __getitem__(self, i: int) -> TidalCycleRecord:
        ts = self.time[i].astype(datetime).replace(tzinfo=timezone.utc)
        return TidalCycleRecord(
            timestamp=ts,
            peak_tide=float(self.peak_tide[i]),
            skew_surge=float(self.skew_surge[i]),
            year_index=int(self.year_index[i]),
            month=int(self.month[i]),
            day_of_year=int(self.day_of_year[i]),
            day_of_month=int(self.day_of_month[i]),
            missing=bool(self.missing[i]),
        )

    def __iter__(self) -> Iterator[TidalCycleRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.skew_surge)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.skew_surge)

    @property
    def year_index(self) -> np.ndarray:
        return self.year - self.year.min() + 1 if len(self) else self.year

    @property
    def sea_level(self) -> np.ndarray:
        return self.peak_tide + self.skew_surge

    @property
    def decimal_year(self) -> np.ndarray:
        start = self.year.astype(str).astype("datetime64[Y]").astype("datetime64[s]")
        stop = (self.year + 1).astype(str).astype("datetime64[Y]").astype("datetime64[s]")
        frac = (self.time - start).astype(float) / (stop - start).astype(float)
        return self.year + frac

    def covariates(self) -> Covariates:
        return Covariates(self.day_of_year, self.month, self.day_of_month, self.peak_tide)

    def subset(self, index) -> "Records":
        return Records(*(getattr(self, f)[index] for f in
                         ("time", "peak_tide", "skew_surge", "year", "month", "day_of_year", "day_of_month")))

    def with_surges(self, skew_surge: np.ndarray) -> "Records":
        skew_surge = np.asarray(skew_surge, dtype=float)
        if skew_surge.shape != self.skew_surge.shape:
            raise ValueError("replacement surges must match the record count")
        return replace(self, skew_surge=skew_surge)

    def to_json(self) -> list[dict]:
        return [r.to_dict() for r in self]

    def to_csv(self, fh: IO[str]) -> None:
        fh.write(",".join(_HEADER) + "\n")
        stamps = np.datetime_as_string(self.time, unit="s")
        for t, x, y in zip(stamps, self.peak_tide, self.skew_surge):
            xs = "" if np.isnan(x) else f"{x:.6f}"
            ys = "" if np.isnan(y) else f"{y:.6f}"
            fh.write(f"{t}Z,{xs},{ys}\n")


def _parse_timestamp(text: str) -> np.datetime64:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "s")


def _parse_float(text: str) -> float:
    text = text.strip()
    return float("nan") if text == "" else float(text)


def parse_records(source: bytes | str | os.PathLike | IO) -> Records:
    """Parse a ``timestamp,peak_tide,skew_surge`` CSV into :class:`Records`.

    ``source`` may be raw bytes, a path, or an open text/binary stream.
    Empty surge fields mark the cycle as missing. Raises
    :class:`RecordFormatError` with the offending line number on malformed
    rows or non-increasing timestamps.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise RecordFormatError("empty input: expected header 'timestamp,peak_tide,skew_surge'") from None
    if tuple(h.strip().lower() for h in header) != _HEADER:
        raise RecordFormatError(f"line 1: expected header {','.join(_HEADER)!r}, got {','.join(header)!r}")

    times, tides, surges = [], [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise RecordFormatError(f"line {line}: expected 3 fields, got {len(row)}")
        try:
            t = _parse_timestamp(row[0])
            x = _parse_float(row[1])
            y = _parse_float(row[2])
        except ValueError as exc:
            raise RecordFormatError(f"line {line}: {exc}") from None
        if times and t <= times[-1]:
            raise RecordFormatError(f"line {line}: timestamp {row[0].strip()} is not after the previous record")
        times.append(t)
        tides.append(x)
        surges.append(y)
    return Records.from_arrays(np.array(times, dtype="datetime64[s]"), tides, surges)


@dataclass(frozen=True)
class MonthlyThresholds:
    """Monthly surge thresholds ``u`` (index 0 is January) at quantile ``q``."""

    u: np.ndarray
    q: float
    n: np.ndarray
    n_exceed: np.ndarray
    pooled: bool = False

    def for_months(self, month: np.ndarray) -> np.ndarray:
        return self.u[np.asarray(month) - 1]

    def to_dict(self) -> dict:
        return {
            "u": [float(v) for v in self.u],
            "q": self.q,
            "n": [int(v) for v in self.n],
            "n_exceed": [int(v) for v in self.n_exceed],
            "pooled": self.pooled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonthlyThresholds":
        return cls(np.array(d["u"], float), d["q"], np.array(d["n"]), np.array(d["n_exceed"]), d.get("pooled", False))


MIN_MONTH_COUNT = 20
_MONTH_NAMES = ("January", "February", "March", "April", "May", "June", "July",
                "August", "September", "October", "November", "December")


def compute_thresholds(records: Records, q_u: float = 0.95, pooled: bool = False) -> MonthlyThresholds:
    """Empirical ``q_u`` quantile of each month's observed surges.

    With ``pooled=True`` every month receives the quantile of all surges,
    as used by the stationary surge model.
    """
    if not 0 < q_u < 1:
        raise ValueError("q_u must lie in (0, 1)")
    obs = records.observed
    y, month = records.skew_surge[obs], records.month[obs]
    n = np.bincount(month, minlength=13)[1:]
    for j in range(12):
        if n[j] < MIN_MONTH_COUNT:
            raise ValueError(f"{_MONTH_NAMES[j]} has {n[j]} observed surges; at least {MIN_MONTH_COUNT} required")
    if pooled:
        u = np.full(12, np.quantile(y, q_u))
    else:
        u = np.array([np.quantile(y[month == j + 1], q_u) for j in range(12)])
    n_exceed = np.bincount(month[y > u[month - 1]], minlength=13)[1:]
    return MonthlyThresholds(u=u, q=q_u, n=n, n_exceed=n_exceed, pooled=pooled)


@dataclass(frozen=True)
class YearSample:
    """Contiguous peak tides for one calendar year."""

    year: int
    tide: np.ndarray
    doy: np.ndarray
    month: np.ndarray
    dom: np.ndarray

    def covariates(self) -> Covariates:
        return Covariates(self.doy, self.month, self.dom, self.tide)

    @property
    def month_counts(self) -> np.ndarray:
        return np.bincount(self.month, minlength=13)[1:]


@dataclass(frozen=True)
class TidalSampleSet:
    """``K`` yearly peak-tide samples used in the maxima convolution."""

    years: tuple[YearSample, ...]
    policy: str = "contiguous_years"

    @property
    def K(self) -> int:
        return len(self.years)

    @property
    def counts(self) -> np.ndarray:
        """Cycle counts ``T_j^(k)`` with shape (K, 12)."""
        return np.array([y.month_counts for y in self.years])

    @property
    def hat(self) -> float:
        """Highest astronomical tide across all samples."""
        return float(max(y.tide.max() for y in self.years))

    @property
    def min_tide(self) -> float:
        return float(min(y.tide.min() for y in self.years))

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "K": self.K,
            "years": [int(y.year) for y in self.years],
            "counts": self.counts.tolist(),
        }


def _complete_year(records: Records, year: int, period_s: float) -> YearSample | None:
    """Tides for one calendar year with single-cycle gaps interpolated, or None."""
    sel = records.year == year
    t = records.time[sel].astype("datetime64[s]").astype(np.int64).astype(float)
    x = records.peak_tide[sel]
    ok = ~np.isnan(x)
    t, x = t[ok], x[ok]
    if t.size < 2:
        return None
    start = float(np.datetime64(f"{year}-01-01T00:00:00", "s").astype(np.int64))
    stop = float(np.datetime64(f"{year + 1}-01-01T00:00:00", "s").astype(np.int64))
    # cycles missing at either end of the year count as gaps too
    edges = np.concatenate(([start - 0.5 * period_s], t, [stop + 0.5 * period_s]))
    steps = np.rint(np.diff(edges) / period_s).astype(int)
    if np.any(steps[1:-1] > 2) or steps[0] > 2 or steps[-1] > 2:
        return None
    fill_t, fill_x = [], []
    for i in np.flatnonzero(steps[1:-1] == 2):
        fill_t.append(0.5 * (t[i] + t[i + 1]))
        fill_x.append(0.5 * (x[i] + x[i + 1]))
    if fill_t:
        t = np.concatenate((t, fill_t))
        x = np.concatenate((x, fill_x))
        order = np.argsort(t)
        t, x = t[order], x[order]
    times = t.astype(np.int64).astype("datetime64[s]")
    _, month, doy, dom = calendar_covariates(times)
    return YearSample(year=int(year), tide=x, doy=doy, month=month, dom=dom)


def _longest_run(years: list[int]) -> int:
    best = run = 1
    for a, b in zip(years, years[1:]):
        run = run + 1 if b == a + 1 else 1
        best = max(best, run)
    return best


def build_tidal_samples(records: Records, K: int | None = None, policy: str = "contiguous_years",
                        start_year: int | None = None) -> TidalSampleSet:
    """Assemble ``K`` yearly peak-tide samples.

    ``contiguous_years`` takes the first run of ``K`` consecutive complete
    calendar years (at or after ``start_year``); ``repeat_single_year``
    replicates the first complete year ``K`` times. A year is complete when
    every tidal cycle is present, allowing isolated single-cycle gaps which
    are linearly interpolated. ``K=None`` takes the longest run of
    contiguous complete years (one year for ``repeat_single_year``).
    """
    if K is not None and K < 1:
        raise ValueError("K must be at least 1")
    if policy not in ("contiguous_years", "repeat_single_year"):
        raise ValueError(f"unknown tidal sample policy {policy!r}")
    period_s = TIDAL_PERIOD_HOURS * 3600.0
    candidates = np.unique(records.year)
    if start_year is not None:
        candidates = candidates[candidates >= start_year]
    complete: dict[int, YearSample] = {}
    for y in candidates:
        ys = _complete_year(records, int(y), period_s)
        if ys is not None:
            complete[int(y)] = ys
    if not complete:
        raise ValueError(f"no complete years of peak tides available (years present: {candidates.tolist()})")
    if K is None:
        K = 1 if policy == "repeat_single_year" else _longest_run(sorted(complete))
    if policy == "repeat_single_year":
        first = complete[min(complete)]
        return TidalSampleSet(years=tuple([first] * K), policy=policy)
    for y0 in sorted(complete):
        if all(y0 + k in complete for k in range(K)):
            return TidalSampleSet(years=tuple(complete[y0 + k] for k in range(K)), policy=policy)
    raise ValueError(
        f"cannot find {K} contiguous complete years; complete years available: {sorted(complete)}"
    )


def detrend_linear(records: Records, reference: float | None = None) -> tuple[Records, float]:
    """Remove a least-squares linear trend fitted to annual mean surges.

    Annual means are regressed on the annual mean decimal time, so an
    injected linear trend is recovered exactly. Surges are adjusted to the
    level at ``reference`` (decimal year; defaults to the last record).
    Returns the adjusted records and the slope in metres per year.
    """
    obs = records.observed
    years = np.unique(records.year[obs])
    if years.size < 2:
        raise ValueError("at least two years of observed surges are required to detrend")
    if np.ptp(records.skew_surge[obs]) == 0:
        return records, 0.0
    t = records.decimal_year
    mt = np.array([t[obs & (records.year == y)].mean() for y in years])
    my = np.array([records.skew_surge[obs & (records.year == y)].mean() for y in years])
    dt = mt - mt.mean()
    slope = float(np.dot(dt, my - my.mean()) / np.dot(dt, dt))
    if slope == 0.0:
        return records, 0.0
    ref = t[-1] if reference is None else reference
    return records.with_surges(records.skew_surge - slope * (t - ref)), slope


MIN_RECENTER_COUNT = 50


def recenter_annual_means(records: Records) -> Records:
    """Shift each year's surges to mean zero.

    Years with fewer than 50 observed surges are left unchanged with a
    warning. Thresholds must be recomputed afterwards.
    """
    y = records.skew_surge.copy()
    obs = records.observed
    for year in np.unique(records.year):
        sel = obs & (records.year == year)
        if sel.sum() < MIN_RECENTER_COUNT:
            logger.warning("year %d has %d observed surges; not re-centred", year, sel.sum())
            continue
        y[sel] -= y[sel].mean()
    return records.with_surges(y)


def record_hash(records: Records) -> str:
    """Stable content hash of the records, used to tie fitted models to data."""
    import hashlib

    h = hashlib.sha256()
    h.update(records.time.astype("int64").tobytes())
    h.update(np.nan_to_num(records.peak_tide, nan=-9999.0).tobytes())
    h.update(np.nan_to_num(records.skew_surge, nan=-9999.0).tobytes())
    return h.hexdigest()
