from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np
import pytest

from skewsurge.exi import ExiModel
from skewsurge.ingest import Records, TidalSampleSet, YearSample, build_tidal_samples, calendar_covariates
from skewsurge.maxima import (
    VariantSpec,
    annual_max_cdf,
    empirical_return_levels,
    month_of_maximum,
    month_occurrence_probs,
    monthly_max_cdf,
    observed_maxima,
    return_level,
    return_level_curve,
    year_specific_cdf,
)
from skewsurge.simulate import TruthSurgeModel, cycle_times, heysham_like_truth, peak_tides
from skewsurge.surgedist import RateParams, TailParams
from skewsurge.surgedist.model import BoundDistribution, SurgeDistribution


class _BoundStep(BoundDistribution):
    def __init__(self, n):
        self.n = n

    def cdf(self, y):
        return np.broadcast_to((np.asarray(y) >= 0).astype(float), np.broadcast_shapes(np.shape(y), (self.n,)))

    def pdf(self, y):
        return np.zeros(np.broadcast_shapes(np.shape(y), (self.n,)))

    def support(self):
        return 0.0, 1.0


@dataclass(frozen=True)
class StepSurge(SurgeDistribution):
    """Surge identically zero."""

    def bind(self, cov):
        return _BoundStep(len(cov))


def stationary_truth(sigma=0.15, xi=0.0):
    return TruthSurgeModel(TailParams.from_values("stationary", sigma=sigma, xi=xi), RateParams("constant", 0.05))


def tides_from(start_year, years, K=None, policy="contiguous_years"):
    t = cycle_times(start_year, years)
    rec = Records.from_arrays(t, peak_tides(t), np.zeros(t.size))
    return build_tidal_samples(rec, K or years, policy=policy)


@pytest.fixture(scope="module")
def tides3():
    return tides_from(1990, 3)


@pytest.fixture(scope="module")
def seasonal_spec(heysham_tides):
    return VariantSpec("full_seasonal", heysham_like_truth(), heysham_tides)


def test_below_support_is_zero(seasonal_spec):
    assert annual_max_cdf(seasonal_spec, -50.0) == 0.0
    assert monthly_max_cdf(seasonal_spec, 3, -50.0) == 0.0


def test_degenerate_surge_step():
    tides = tides_from(2001, 1)
    spec = VariantSpec("full_seasonal", StepSurge(), tides)
    y = tides.years[0]
    for j in (1, 7):
        top = y.tide[y.month == j].max()
        assert monthly_max_cdf(spec, j, top) == 1.0
        assert monthly_max_cdf(spec, j, top - 1e-9) == 0.0


def test_degenerate_surge_median_level(tides3):
    spec = VariantSpec("full_seasonal", StepSurge(), tides3)
    z = return_level(spec, 0.5)
    assert z == pytest.approx(np.median([y.tide.max() for y in tides3.years]), abs=1e-4)


def test_identical_years_baseline_equals_current():
    tides = tides_from(1990, 1, K=4, policy="repeat_single_year")
    truth = stationary_truth()
    base = VariantSpec("baseline", truth, tides)
    cur = VariantSpec("current", truth, tides)
    z = np.linspace(8.5, 10.5, 15)
    np.testing.assert_allclose(annual_max_cdf(base, z), annual_max_cdf(cur, z), rtol=1e-13, atol=0)


def test_single_year_factorises(seasonal_spec):
    tides = tides_from(1995, 1)
    spec = VariantSpec("full_seasonal", heysham_like_truth(), tides)
    for z in (9.0, 9.6, 10.2):
        prod = np.prod([monthly_max_cdf(spec, j, z) for j in range(1, 13)])
        assert annual_max_cdf(spec, z) == pytest.approx(prod, rel=1e-12)


def test_annual_below_monthly(seasonal_spec):
    for z in (9.0, 9.5, 10.0):
        a = annual_max_cdf(seasonal_spec, z)
        assert all(a <= monthly_max_cdf(seasonal_spec, j, z) + 1e-15 for j in range(1, 13))


def test_year_specific_brackets_average(seasonal_spec):
    for z in (9.2, 9.8):
        per_year = [year_specific_cdf(seasonal_spec, k, z) for k in range(seasonal_spec.K)]
        avg = annual_max_cdf(seasonal_spec, z)
        assert min(per_year) <= avg <= max(per_year)
        assert avg == pytest.approx(np.mean(per_year), rel=1e-12)


def test_return_levels_monotone(seasonal_spec):
    curve = return_level_curve(seasonal_spec, p=(0.5, 0.1, 0.01, 0.001))
    assert np.all(np.diff(curve.p) < 0) and np.all(np.diff(curve.z) > 0)
    for p, z in zip(curve.p, curve.z):
        assert 1 - annual_max_cdf(seasonal_spec, z) == pytest.approx(p, rel=1e-3)


def test_monthly_return_level(seasonal_spec):
    z = return_level(seasonal_spec, 0.1, month=10)
    assert 1 - monthly_max_cdf(seasonal_spec, 10, z) == pytest.approx(0.1, rel=1e-3)
    assert z < return_level(seasonal_spec, 0.1)


def test_year_specific_return_level(seasonal_spec):
    z = return_level(seasonal_spec, 0.1, year=1)
    assert 1 - year_specific_cdf(seasonal_spec, 1, z) == pytest.approx(0.1, rel=1e-3)
    with pytest.raises(ValueError):
        return_level(seasonal_spec, 0.1, month=1, year=1)


def test_invalid_probability(seasonal_spec):
    with pytest.raises(ValueError):
        return_level(seasonal_spec, 1.0)


def test_curve_formats(seasonal_spec):
    curve = return_level_curve(seasonal_spec, p=(0.1, 0.01))
    buf = io.StringIO()
    text = curve.to_csv(buf)
    assert text.splitlines()[0] == "p,return_period_years,z_metres"
    assert buf.getvalue() == text and len(text.splitlines()) == 3
    d = json.loads(curve.to_json())
    assert d["variant"] == "full_seasonal" and len(d["z"]) == 2


def test_interaction_needs_tide_covariates(heysham_tides):
    with pytest.raises(ValueError, match="peak-tide"):
        VariantSpec("interaction", heysham_like_truth(), heysham_tides)
    with pytest.raises(ValueError, match="extremal index"):
        VariantSpec("temporal_dependence", heysham_like_truth(tail="S4"), heysham_tides)
    with pytest.raises(ValueError, match="unknown variant"):
        VariantSpec("bogus", heysham_like_truth(), heysham_tides)


def test_temporal_dependence_with_unit_theta(heysham_tides):
    truth = heysham_like_truth(tail="S4")
    inter = VariantSpec("interaction", truth, heysham_tides)
    td = VariantSpec("temporal_dependence", truth, heysham_tides, ExiModel.independent())
    z = np.linspace(9.0, 10.5, 7)
    np.testing.assert_allclose(annual_max_cdf(td, z), annual_max_cdf(inter, z), rtol=1e-14)


def test_clustering_raises_annual_cdf(heysham_tides):
    truth = heysham_like_truth(tail="S4")
    grid = np.linspace(-1, 2, 10)
    exi = ExiModel(2, 0.5, 0.6, 0.6, 0.2, grid, np.full(10, 0.6), np.full(10, 20))
    inter = VariantSpec("interaction", truth, heysham_tides)
    td = VariantSpec("temporal_dependence", truth, heysham_tides, exi)
    for z in (9.5, 10.0):
        assert annual_max_cdf(td, z) > annual_max_cdf(inter, z)


def test_seasonal_surge_variant_runs(heysham_tides):
    spec = VariantSpec("seasonal_surge", heysham_like_truth(), heysham_tides)
    z = np.array([9.0, 9.5, 10.0])
    F = annual_max_cdf(spec, z)
    assert np.all(np.diff(F) > 0) and np.all((F > 0) & (F < 1))


def test_seasonal_surge_with_zero_tide_terms(heysham_tides):
    plain = VariantSpec("seasonal_surge", heysham_like_truth(), heysham_tides)
    tidal = VariantSpec("seasonal_surge", heysham_like_truth(tail="S4"), heysham_tides)
    z = np.array([9.3, 9.9])
    np.testing.assert_allclose(annual_max_cdf(tidal, z), annual_max_cdf(plain, z), rtol=1e-10)


def test_no_underflow_in_long_products():
    tides = tides_from(1980, 19)
    spec = VariantSpec("full_seasonal", heysham_like_truth(), tides)
    lf = spec.log_annual_cdf(7.5)
    assert np.isfinite(lf) and lf < -745


# -- empirical levels and observed maxima --------------------------------------

def test_empirical_three_maxima():
    c = empirical_return_levels([2.0, 1.0, 3.0])
    assert c.z[np.argmin(c.p)] == 3.0
    assert c.p.min() == pytest.approx(0.25)


def test_empirical_single_maximum():
    c = empirical_return_levels([4.2])
    assert c.p.tolist() == [0.5] and c.z.tolist() == [4.2]


def test_observed_maxima_and_month(heysham_records):
    years, mx = observed_maxima(heysham_records)
    assert years.size == 20
    i = np.flatnonzero(heysham_records.year == years[0])
    assert mx[0] == np.nanmax(heysham_records.sea_level[i])
    _, months = month_of_maximum(heysham_records)
    assert months.min() >= 1 and months.max() <= 12
    _, jan = observed_maxima(heysham_records, month=1)
    assert np.all(jan <= mx)


# -- month of occurrence -----------------------------------------------------------

def test_month_probabilities_sum_to_one(seasonal_spec):
    for z in np.linspace(9.0, 11.0, 20):
        assert month_occurrence_probs(seasonal_spec, z).sum() == pytest.approx(1.0, abs=1e-10)


def _flat_tides(K=2, level=8.0):
    years = []
    for k in range(K):
        t = cycle_times(2001 + k, 1)
        _, month, doy, dom = calendar_covariates(t)
        years.append(YearSample(2001 + k, np.full(t.size, level), doy, month, dom))
    return TidalSampleSet(tuple(years))


def test_month_probabilities_proportional_to_counts():
    tides = _flat_tides()
    spec = VariantSpec("baseline", stationary_truth(), tides)
    P = month_occurrence_probs(spec, 9.0)
    T = tides.counts
    np.testing.assert_allclose(P, (T / T.sum(axis=1, keepdims=True)).mean(axis=0), atol=1e-9)


def test_month_probabilities_below_support():
    spec = VariantSpec("baseline", stationary_truth(), _flat_tides())
    with pytest.raises(ValueError, match="below the support"):
        month_occurrence_probs(spec, -100.0)
