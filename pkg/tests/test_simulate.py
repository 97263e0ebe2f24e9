from __future__ import annotations

import numpy as np
import pytest

from skewsurge.exi import theta_intervals, theta_runs
from skewsurge.simulate import (
    SimulationConfig,
    TideConfig,
    TruthSurgeModel,
    armax_uniforms,
    heysham_like_truth,
    simulate_records,
    tide_moments,
)
from skewsurge.surgedist import RateParams, TailParams, eval_lambda


def test_exceedance_rate_binomial():
    truth = heysham_like_truth(tail="S2", rate="R1", beta=0.0, phi=0.0, alpha_x=0.0, beta_x=0.0, phi_x=0.0)
    rec = simulate_records(SimulationConfig(truth, years=142, seed=7))
    n = len(rec)
    assert n > 100000
    rate = np.mean(rec.skew_surge > truth.thresholds[rec.month - 1])
    assert abs(rate - 0.05) < 3 * np.sqrt(0.05 * 0.95 / n)


def test_no_clustering_gives_unit_theta():
    rec = simulate_records(SimulationConfig(heysham_like_truth(), years=30, seed=8))
    y = np.quantile(rec.skew_surge, 0.995)
    assert theta_runs(rec.skew_surge, y, 1)[0] > 0.95


def test_clustering_recovers_theta(rng):
    assert theta_intervals(armax_uniforms(100000, 0.4, rng), 0.99) == pytest.approx(0.4, abs=0.1)


def test_armax_margins_uniform(rng):
    u = armax_uniforms(50000, 0.5, rng)
    assert np.all((u > 0) & (u < 1))
    np.testing.assert_allclose(np.quantile(u, [0.1, 0.5, 0.9]), [0.1, 0.5, 0.9], atol=0.02)
    with pytest.raises(ValueError):
        armax_uniforms(10, 0.0, rng)


def test_simulation_deterministic():
    cfg = SimulationConfig(heysham_like_truth(), years=2, seed=5)
    np.testing.assert_array_equal(simulate_records(cfg).skew_surge, simulate_records(cfg).skew_surge)


def test_missing_fraction():
    rec = simulate_records(SimulationConfig(heysham_like_truth(), years=5, seed=1, missing_fraction=0.1))
    assert np.mean(~rec.observed) == pytest.approx(0.1, abs=0.02)


def test_invalid_truth_rejected():
    with pytest.raises(ValueError, match="non-positive scale"):
        TruthSurgeModel(TailParams.from_values("S2", alpha=0.05, beta=0.1, phi=0.0, xi=0.0),
                        RateParams("constant", 0.05))
    with pytest.raises(ValueError, match="1 - q"):
        TruthSurgeModel(TailParams.from_values("stationary", sigma=0.1, xi=0.0), RateParams("constant", 0.1))


def test_truth_density_continuous_at_threshold():
    truth = heysham_like_truth()
    rec = simulate_records(SimulationConfig(truth, years=1, seed=0))
    cov = rec.covariates().take(np.arange(0, len(rec), 60))
    b = truth.bind(cov)
    u = b.u
    np.testing.assert_allclose(b.cdf(u), 1 - eval_lambda(truth.rate, cov), rtol=1e-12)
    below, above = b.pdf(u - 1e-9), b.pdf(u + 1e-9)
    np.testing.assert_allclose(below, above, rtol=0.35)


def test_truth_ppf_inverts_cdf():
    truth = heysham_like_truth()
    rec = simulate_records(SimulationConfig(truth, years=1, seed=0))
    b = truth.bind(rec.covariates())
    v = np.linspace(0.01, 0.999, 7)[:, None]
    np.testing.assert_allclose(b.cdf(b.ppf(v)), np.broadcast_to(v, (7, len(rec))), atol=1e-10)


def test_tide_moments_and_config():
    mean, sd = tide_moments()
    assert 7.5 < mean < 8.5 and 0.5 < sd < 1.0
    assert TideConfig().to_dict()["m2"] == 3.0


def test_zero_years_rejected():
    with pytest.raises(ValueError):
        simulate_records(SimulationConfig(heysham_like_truth(), years=0))
