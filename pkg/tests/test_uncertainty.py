from __future__ import annotations

import numpy as np
import pytest

from skewsurge.ingest import build_tidal_samples
from skewsurge.maxima import VariantSpec, observed_maxima
from skewsurge.pipeline import PipelineConfig, fit_pipeline
from skewsurge.simulate import SimulationConfig, TruthSurgeModel, heysham_like_truth, simulate_records
from skewsurge.surgedist import RateParams, TailParams
from skewsurge.uncertainty import (
    BootstrapConfig,
    bootstrap_return_levels,
    ks_pvalue,
    pit_transform,
    pp_plot_data,
    stationary_bootstrap,
)


def stationary_truth():
    return TruthSurgeModel(TailParams.from_values("stationary", sigma=0.15, xi=0.0), RateParams("constant", 0.05))


@pytest.fixture(scope="module")
def small_fit():
    rec = simulate_records(SimulationConfig(stationary_truth(), years=4, seed=21))
    tides = build_tidal_samples(rec, 1)
    return rec, fit_pipeline(rec, tides, PipelineConfig(variant="baseline"))


# -- stationary bootstrap indices ------------------------------------------------

def test_bootstrap_indices_deterministic():
    np.testing.assert_array_equal(stationary_bootstrap(1000, 7.0, 3), stationary_bootstrap(1000, 7.0, 3))
    assert not np.array_equal(stationary_bootstrap(1000, 7.0, 3), stationary_bootstrap(1000, 7.0, 4))


def test_unit_block_is_iid():
    idx = stationary_bootstrap(20000, 1.0, 0)
    cont = np.mean(np.diff(idx) == 1)
    assert cont < 0.001
    counts = np.bincount(idx % 10, minlength=10)
    assert np.all(np.abs(counts / idx.size - 0.1) < 0.01)


@pytest.mark.parametrize("mean_block", [4.0, 10.0, 25.0])
def test_block_length_mean(mean_block):
    n = 200000
    idx = stationary_bootstrap(n, mean_block, 8)
    breaks = np.sum(np.diff(idx) % n != 1) + 1
    assert n / breaks == pytest.approx(mean_block, rel=0.05)


def test_bootstrap_index_range():
    idx = stationary_bootstrap(50, 30.0, 1)
    assert idx.size == 50 and idx.min() >= 0 and idx.max() < 50


def test_bootstrap_invalid_arguments():
    with pytest.raises(ValueError):
        stationary_bootstrap(0, 2.0, 0)
    with pytest.raises(ValueError):
        stationary_bootstrap(10, 0.5, 0)
    with pytest.raises(ValueError):
        BootstrapConfig(n_reps=1)


# -- return-level intervals --------------------------------------------------------

def test_bootstrap_bit_identical(small_fit):
    rec, fit = small_fit
    cfg = BootstrapConfig(n_reps=4, seed=9)
    a = bootstrap_return_levels(fit, rec, cfg, [0.1, 0.01])
    b = bootstrap_return_levels(fit, rec, cfg, [0.1, 0.01])
    np.testing.assert_array_equal(a.replicates, b.replicates)
    np.testing.assert_array_equal(a.xi, b.xi)


def test_bootstrap_two_replicates_min_max(small_fit):
    rec, fit = small_fit
    res = bootstrap_return_levels(fit, rec, BootstrapConfig(n_reps=2, seed=1), [0.01])
    assert res.replicates.shape == (2, 1)
    assert res.lower[0] == res.replicates.min() and res.upper[0] == res.replicates.max()
    assert res.n_failed == 0


def test_bootstrap_parallel_matches_serial(small_fit):
    rec, fit = small_fit
    serial = bootstrap_return_levels(fit, rec, BootstrapConfig(n_reps=3, seed=2), [0.01])
    parallel = bootstrap_return_levels(fit, rec, BootstrapConfig(n_reps=3, seed=2, workers=2), [0.01])
    np.testing.assert_array_equal(serial.replicates, parallel.replicates)


def test_bootstrap_outputs(small_fit):
    rec, fit = small_fit
    res = bootstrap_return_levels(fit, rec, BootstrapConfig(n_reps=3, seed=5), [0.1, 0.01])
    assert res.to_csv().splitlines()[0] == "p,z_hat,lo95,hi95"
    d = res.to_dict()
    assert len(d["xi"]) == 3 and d["n_failed"] == 0
    np.testing.assert_allclose(res.z_hat, fit.return_levels([0.1, 0.01]))


# -- probability integral transform ---------------------------------------------

def test_pit_of_truth_is_uniform(heysham_records):
    pit = pit_transform(heysham_like_truth(), heysham_records)
    assert pit.u.size == heysham_records.observed.sum()
    assert pit.p_value > 0.01
    assert pit.years.size == 20 and pit.to_dict()["n"] == pit.u.size


def test_pit_detects_wrong_phase(heysham_records):
    truth = heysham_like_truth()
    v = truth.tail.values
    wrong = TruthSurgeModel(TailParams.from_values("S2", alpha=v["alpha"], beta=v["beta"], phi=v["phi"] + 90,
                                                   xi=v["xi"]), truth.rate, reference_tide=truth.reference_tide)
    assert pit_transform(wrong, heysham_records).p_value < 0.01


def test_pit_constant_surges(heysham_records):
    rec = heysham_records.with_surges(np.full(len(heysham_records), 0.1))
    pit = pit_transform(stationary_truth(), rec)
    assert np.ptp(pit.u) == 0
    assert pit.p_value < 1e-10


def test_ks_exact_for_small_samples():
    assert ks_pvalue([0.5]) == pytest.approx(1.0)
    assert ks_pvalue(np.full(10, 0.99)) < 1e-10


# -- probability-probability data ------------------------------------------------

def test_pp_shapes_and_bounds(heysham_tides):
    spec = VariantSpec("full_seasonal", heysham_like_truth(), heysham_tides)
    pp = pp_plot_data([9.4, 9.6, 9.8, 10.0, 10.2], spec)
    assert pp.empirical.size == 5 and pp.model.size == 5
    assert np.all(pp.lower < pp.upper)
    np.testing.assert_allclose(pp.empirical, np.arange(1, 6) / 6)
    assert len(pp.to_csv().splitlines()) == 6
    with pytest.raises(ValueError):
        pp_plot_data([9.4, 9.6], spec)


def test_pp_calibrated_and_shifted(heysham_records):
    tides = build_tidal_samples(heysham_records, 20)
    spec = VariantSpec("full_seasonal", heysham_like_truth(), tides)
    years, mx = observed_maxima(heysham_records)
    pp = pp_plot_data(mx, spec, mode="year_specific", years=years)
    inside = np.mean((pp.model >= pp.lower) & (pp.model <= pp.upper))
    assert inside >= 0.9
    shifted = pp_plot_data(mx + 0.3, spec, mode="year_specific", years=years)
    assert np.mean(shifted.model - shifted.empirical) > 0.1


def test_pp_year_specific_requires_known_years(heysham_tides):
    spec = VariantSpec("full_seasonal", heysham_like_truth(), heysham_tides)
    with pytest.raises(ValueError, match="not in the tidal samples"):
        pp_plot_data(np.linspace(9, 10, 5), spec, mode="year_specific", years=[1900] * 5)
    with pytest.raises(ValueError, match="unknown mode"):
        pp_plot_data(np.linspace(9, 10, 5), spec, mode="other")
