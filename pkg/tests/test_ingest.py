from __future__ import annotations

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewsurge.ingest import (
    TIDAL_PERIOD_HOURS,
    RecordFormatError,
    Records,
    build_tidal_samples,
    calendar_covariates,
    compute_thresholds,
    detrend_linear,
    parse_records,
    recenter_annual_means,
)
from skewsurge.simulate import TideConfig, cycle_times, peak_tides

PERIOD_S = TIDAL_PERIOD_HOURS * 3600


def make_records(start_year=2000, years=2, surges=None, seed=0):
    t = cycle_times(start_year, years)
    x = peak_tides(t)
    if surges is None:
        surges = np.random.default_rng(seed).normal(0, 0.2, t.size)
    return Records.from_arrays(t, x, surges)


# -- parsing ---------------------------------------------------------------

def test_parse_single_row_calendar():
    rec = parse_records(b"timestamp,peak_tide,skew_surge\n2000-01-01T06:00Z,9.10,0.25\n")
    r = rec[0]
    assert (r.month, r.day_of_year, r.day_of_month, r.year_index) == (1, 1, 1, 1)
    assert r.peak_tide == 9.10 and r.skew_surge == 0.25
    assert r.sea_level == pytest.approx(9.35)
    assert not r.missing


def test_parse_duplicate_timestamp_is_rejected():
    text = "timestamp,peak_tide,skew_surge\n2000-01-01T06:00Z,9.1,0.2\n2000-01-01T06:00Z,9.2,0.1\n"
    with pytest.raises(RecordFormatError, match="line 3"):
        parse_records(text.encode())


def test_parse_malformed_row_reports_line():
    text = "timestamp,peak_tide,skew_surge\n2000-01-01T06:00Z,9.1,0.2\n2000-01-01T18:26Z,abc,0.1\n"
    with pytest.raises(RecordFormatError, match="line 3"):
        parse_records(io.StringIO(text))


def test_parse_bad_header():
    with pytest.raises(RecordFormatError, match="line 1"):
        parse_records(b"time,tide,surge\n")


def test_parse_empty_surge_is_missing():
    rec = parse_records(b"timestamp,peak_tide,skew_surge\n2000-01-01T06:00Z,9.1,\n")
    assert rec[0].missing and np.isnan(rec.skew_surge[0])
    assert rec[0].to_dict()["skew_surge"] is None


def test_parse_57_years_round_trip(tmp_path):
    t = cycle_times(1950, 57)
    start = np.datetime64("1950-01-01T03:00:00", "s")
    stop = np.datetime64("2007-01-01T00:00:00", "s")
    expected = int(np.floor((stop - start).astype(float) / round(PERIOD_S))) + 1
    assert t.size == expected
    rec = Records.from_arrays(t, peak_tides(t), np.zeros(t.size))
    path = tmp_path / "records.csv"
    with path.open("w") as fh:
        rec.to_csv(fh)
    back = parse_records(path)
    assert len(back) == expected
    assert len(back) / 57 == pytest.approx(705.4, abs=1)
    np.testing.assert_array_equal(back.time, rec.time)


def test_record_json_field_names():
    rec = make_records(years=1)
    d = rec[10].to_dict()
    assert set(d) == {"timestamp", "peak_tide", "skew_surge", "year_index", "month", "day_of_year",
                      "day_of_month", "missing"}
    json.dumps(rec.to_json()[:3])


def test_cycle_spacing_within_tolerance():
    rec = make_records(years=1)
    gaps = np.diff(rec.time).astype(float) / 3600
    assert np.all(np.abs(gaps - TIDAL_PERIOD_HOURS) < 2)


def test_leap_day_shares_day_of_year_with_28_february():
    t = np.array(["2000-02-28T12:00", "2000-02-29T12:00", "2000-03-01T12:00", "2000-12-31T12:00"],
                 dtype="datetime64[s]")
    _, month, doy, dom = calendar_covariates(t)
    assert doy.tolist() == [59, 59, 60, 365]
    assert month.tolist() == [2, 2, 3, 12]
    assert dom.tolist() == [28, 29, 1, 31]


def test_day_offset_range():
    rec = make_records(years=4)
    off = rec.covariates().day_offset
    assert off.min() >= -15.5 and off.max() <= 15.5
    jan = rec.month == 1
    assert np.all(off[jan] == rec.day_of_month[jan] - 16)


# -- thresholds ------------------------------------------------------------

def _month_records(values_per_month):
    """Records with the given surges placed in every month of 2001."""
    times, surges = [], []
    for j in range(1, 13):
        for i, v in enumerate(values_per_month):
            times.append(np.datetime64(f"2001-{j:02d}-01T00:00:00", "s") + np.timedelta64(i * 60, "s"))
            surges.append(v)
    return Records.from_arrays(np.array(times), np.zeros(len(times)), np.array(surges))


def test_threshold_median_of_symmetric_grid():
    grid = np.repeat(np.linspace(0.0, 1.0, 11), 2)
    thr = compute_thresholds(_month_records(grid), q_u=0.5)
    np.testing.assert_allclose(thr.u, 0.5)


def test_threshold_constant_sample():
    thr = compute_thresholds(_month_records(np.full(25, 0.37)), q_u=0.95)
    np.testing.assert_array_equal(thr.u, 0.37)


def test_threshold_uniform_sample(rng):
    thr = compute_thresholds(_month_records(rng.random(1000)), q_u=0.95)
    assert np.all((thr.u >= 0.93) & (thr.u <= 0.97))


def test_threshold_exceedance_fraction(heysham_records):
    thr = compute_thresholds(heysham_records, 0.95)
    np.testing.assert_array_less(np.abs(thr.n_exceed / thr.n - 0.05), 1.0 / thr.n + 1e-12)


def test_threshold_sparse_month_named():
    rec = make_records(years=1)
    y = rec.skew_surge.copy()
    y[rec.month == 3] = np.nan
    with pytest.raises(ValueError, match="March"):
        compute_thresholds(rec.with_surges(y))


def test_threshold_json_round_trip(heysham_records):
    thr = compute_thresholds(heysham_records)
    d = json.loads(json.dumps(thr.to_dict()))
    assert set(d) == {"u", "q", "n", "n_exceed", "pooled"}
    back = type(thr).from_dict(d)
    np.testing.assert_array_equal(back.u, thr.u)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_threshold_quantile_monotone(heysham_records, a, b):
    lo, hi = sorted((a, b))
    assert np.all(compute_thresholds(heysham_records, lo).u <= compute_thresholds(heysham_records, hi).u)


# -- tidal samples ---------------------------------------------------------

def test_single_year_partition():
    rec = make_records(years=1)
    ts = build_tidal_samples(rec, 1)
    assert ts.counts.sum() == np.sum(rec.year == 2000)
    assert ts.K == 1


def test_repeat_single_year():
    rec = make_records(years=2)
    ts = build_tidal_samples(rec, 3, policy="repeat_single_year")
    assert ts.K == 3
    for y in ts.years[1:]:
        np.testing.assert_array_equal(y.tide, ts.years[0].tide)


def test_nodal_modulation_changes_yearly_hat():
    t = cycle_times(1980, 19)
    rec = Records.from_arrays(t, peak_tides(t, TideConfig()), np.zeros(t.size))
    ts = build_tidal_samples(rec, 19)
    hats = [y.tide.max() for y in ts.years]
    assert max(hats) - min(hats) > 0.05


def test_default_K_is_longest_complete_run():
    rec = make_records(years=5)
    x = rec.peak_tide.copy()
    x[(rec.year == 2002)] = np.nan
    ts = build_tidal_samples(Records.from_arrays(rec.time, x, rec.skew_surge))
    assert ts.K == 2 and [y.year for y in ts.years] == [2000, 2001]


def test_single_gap_is_interpolated_and_contiguous():
    rec = make_records(years=1)
    x = rec.peak_tide.copy()
    x[100] = np.nan
    ts = build_tidal_samples(Records.from_arrays(rec.time, x, rec.skew_surge), 1)
    assert ts.years[0].tide.size == len(rec)
    assert ts.years[0].tide[100] == pytest.approx(0.5 * (x[99] + x[101]))


def test_double_gap_rejects_year():
    rec = make_records(years=1)
    x = rec.peak_tide.copy()
    x[100:102] = np.nan
    with pytest.raises(ValueError, match="no complete years"):
        build_tidal_samples(Records.from_arrays(rec.time, x, rec.skew_surge), 1)


def test_insufficient_span_lists_years():
    rec = make_records(years=2)
    with pytest.raises(ValueError, match=r"\[2000, 2001\]"):
        build_tidal_samples(rec, 3)


# -- detrending and re-centring ---------------------------------------------

def test_detrend_constant_series_unchanged():
    rec = make_records(years=3, surges=np.full(cycle_times(2000, 3).size, 0.1))
    out, slope = detrend_linear(rec)
    assert abs(slope) < 1e-12
    np.testing.assert_array_equal(out.skew_surge, rec.skew_surge)


def test_detrend_recovers_injected_trend():
    base = make_records(years=10, seed=3)
    y = base.skew_surge + 0.001 * base.decimal_year
    _, slope = detrend_linear(base.with_surges(y))
    _, slope0 = detrend_linear(base)
    assert slope - slope0 == pytest.approx(0.001, abs=1e-6)


def test_recenter_shifts_year_mean():
    rec = make_records(years=2, seed=4)
    y = rec.skew_surge.copy()
    first = rec.year == 2000
    y[first] += 0.03 - y[first].mean()
    out = recenter_annual_means(rec.with_surges(y))
    np.testing.assert_allclose(out.skew_surge[first], y[first] - 0.03, atol=1e-12)


def test_recenter_idempotent_and_removes_nodal_cycle():
    t = cycle_times(1970, 25)
    rec = Records.from_arrays(t, peak_tides(t), np.zeros(t.size))
    cycle = 0.05 * np.sin(2 * np.pi * (rec.decimal_year - 1970) / 18.6)
    noise = np.random.default_rng(5).normal(0, 0.1, t.size)
    out = recenter_annual_means(rec.with_surges(cycle + noise))
    means = [out.skew_surge[out.year == y].mean() for y in np.unique(out.year)]
    assert np.max(np.abs(means)) < 1e-12
    again = recenter_annual_means(out)
    np.testing.assert_allclose(again.skew_surge, out.skew_surge, atol=1e-12)


def test_recenter_skips_sparse_year(caplog):
    rec = make_records(years=2)
    y = rec.skew_surge.copy()
    sparse = np.flatnonzero(rec.year == 2001)[10:]
    y[sparse] = np.nan
    out = recenter_annual_means(rec.with_surges(y))
    keep = (rec.year == 2001) & ~np.isnan(y)
    np.testing.assert_array_equal(out.skew_surge[keep], y[keep])
    assert "not re-centred" in caplog.text
