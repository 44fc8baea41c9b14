import numpy as np
import pytest

from magslam import metrics
from magslam.config import ScenarioConfig


def test_error_series_examples():
    T = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_array_equal(metrics.position_error_series(T, T), 0.0)
    np.testing.assert_allclose(metrics.position_error_series(T + [3, 4, 0], T), 5.0)
    with pytest.raises(ValueError):
        metrics.position_error_series(T[:5], T)


def test_endpoint_ratio_examples():
    rng = np.random.default_rng(1)
    truth = rng.normal(size=(20, 3))
    odo = truth + np.linspace(0, 1, 20)[:, None]
    assert metrics.endpoint_ratio(odo, odo, truth) == pytest.approx(1.0)
    assert metrics.endpoint_ratio(truth, odo, truth) == 0.0
    with pytest.raises(ZeroDivisionError):
        metrics.endpoint_ratio(odo, truth, truth)


def test_deviation_examples():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(30, 3, 3))
    b = a + rng.normal(scale=0.1, size=a.shape)
    assert metrics.deviation_from_centralized(a, a) == 0.0
    perm = [2, 0, 1]
    assert metrics.deviation_from_centralized(a[:, perm], b[:, perm]) == pytest.approx(
        metrics.deviation_from_centralized(a, b), rel=1e-14)
    shifted = a + [0.0, 0.3, 0.4]
    assert metrics.deviation_from_centralized(shifted, a) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        metrics.deviation_from_centralized(a[:, :2], b)


def test_run_metrics_non_negative():
    rng = np.random.default_rng(3)
    truth = rng.normal(size=(40, 2, 3))
    est = truth + rng.normal(scale=0.05, size=truth.shape)
    odo = truth + np.linspace(0, 1, 40)[:, None, None]
    rm = metrics.RunMetrics.from_run(est, truth, odo, central=truth)
    assert np.all(rm.errors >= 0) and rm.rmse >= 0 and np.all(rm.endpoint_ratio >= 0)
    np.testing.assert_array_equal(rm.deviation, rm.errors)


@pytest.fixture(scope="module")
def small_cfg():
    return ScenarioConfig(N=60, M=40)


def test_sweep_single_rep_has_zero_std(small_cfg):
    res = metrics.monte_carlo_sweep(small_cfg, "alpha", [0.0, 0.5], reps=1, seed=4)
    np.testing.assert_array_equal(res.std, 0.0)
    assert res.mean[0] < 1e-7
    assert res.reps == 1 and list(res.failures) == [0, 0]


def test_sweep_is_deterministic_and_parallel_safe(small_cfg):
    a = metrics.monte_carlo_sweep(small_cfg, "n_c", [1, 3], reps=2, seed=9)
    b = metrics.monte_carlo_sweep(small_cfg, "n_c", [1, 3], reps=2, seed=9)
    c = metrics.monte_carlo_sweep(small_cfg, "n_c", [1, 3], reps=2, seed=9, workers=2)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.samples, c.samples)
    np.testing.assert_array_equal(a.baseline, c.baseline)


def test_sweep_exact_agreement_at_zero_dropout(small_cfg):
    res = metrics.monte_carlo_sweep(small_cfg, "alpha", [0.0], reps=3, seed=5)
    assert np.all(res.samples < 1e-7)
    assert res.std[0] >= 0


def test_sweep_rejects_bad_arguments(small_cfg):
    with pytest.raises(ValueError):
        metrics.monte_carlo_sweep(small_cfg, "speed", [1], reps=1)
    with pytest.raises(ValueError):
        metrics.monte_carlo_sweep(small_cfg, "alpha", [0], reps=0)


def test_failed_runs_are_counted_not_raised(small_cfg, monkeypatch):
    from magslam.ekf import FilterError

    def boom(*args, **kwargs):
        raise FilterError("timestep 3: singular")

    monkeypatch.setattr(metrics, "run_distributed", boom)
    res = metrics.monte_carlo_sweep(small_cfg, "alpha", [0.5], reps=2, seed=1)
    assert list(res.failures) == [2]
    assert np.isnan(res.mean[0])


def test_rep_seeds_distinct():
    seeds = {metrics.rep_seed(0, r) for r in range(100)}
    assert len(seeds) == 100
    assert metrics.rep_seed(0, 1) != metrics.rep_seed(1, 0)
