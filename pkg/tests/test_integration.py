"""Integration tests: model-level properties checked end to end on generated data."""

from __future__ import annotations

import numpy as np
import pytest
import requests
from scipy.stats import ortho_group

from gridcast.config import FetchConfig
from gridcast.evaluation.metrics import framewise, rmse
from gridcast.ingest.cache import ResponseCache, resolve_cache_dir
from gridcast.ingest.power import fetch_power
from gridcast.ingest.series import SHORT_TERM_SPLIT, split
from gridcast.models.dmd import build_snapshot_pair, dmd_fit, dmd_forecast
from gridcast.models.mar import mar_fit_als, mar_predict
from gridcast.models.ttdmd import build_tt_snapshot_tensors, ttdmd_fit, ttdmd_forecast
from gridcast.synthetic import linear_fixture, weather_fixture
from gridcast.tensor.dense import vectorize

TRAIN_STEPS = 1000
LONG_HORIZON = 100

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _flat_snapshots(values: np.ndarray) -> np.ndarray:
    return np.column_stack([vectorize(values[..., t]) for t in range(values.shape[-1])])


def _multiset_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Largest distance from a value in one set to its nearest partner in the other."""
    dist = np.abs(a[:, None] - b[None, :])
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def _instance(seed: int):
    """Random noiseless linear fixture with extents <= 10 x 10 and 20-60 snapshots."""
    rng = np.random.default_rng(1000 + seed)
    shape = (int(rng.integers(3, 11)), int(rng.integers(3, 11)))
    steps = int(rng.integers(20, 61))
    rank = int(rng.choice([2, 4, 6]))
    return linear_fixture(shape=shape, steps=steps, rank=rank, seed=seed), rank


@pytest.fixture(scope="module")
def weather():
    series = weather_fixture()
    data = series.values.data
    return data[..., :TRAIN_STEPS], data[..., TRAIN_STEPS:TRAIN_STEPS + LONG_HORIZON]


@pytest.fixture(scope="module")
def weather_forecasts(weather):
    train, test = weather
    tt_model = ttdmd_fit(build_tt_snapshot_tensors(train))
    tt = ttdmd_forecast(tt_model, x0=train[..., -1], steps=LONG_HORIZON).values.data
    mar_model = mar_fit_als(train)
    mar = mar_predict(mar_model, train[..., -1], LONG_HORIZON).data
    return tt, mar, test


# ===================================================================
# TT-DMD against exact DMD
# ===================================================================


class TestTtDmdMatchesDenseDmd:
    @pytest.mark.parametrize("seed", range(50))
    def test_random_instance(self, seed):
        series, rank = _instance(seed)
        values = series.values.data
        tt_model = ttdmd_fit(build_tt_snapshot_tensors(values), energy=1.0)
        dense_model = dmd_fit(build_snapshot_pair(_flat_snapshots(values)), rank=rank)
        assert tt_model.rank == rank
        assert _multiset_gap(tt_model.eigenvalues, dense_model.eigenvalues) < 1e-8

        tt = _flat_snapshots(ttdmd_forecast(tt_model, steps=10).values.data)
        dense = dmd_forecast(dense_model, vectorize(values[..., -1]), 10).values.data
        assert np.linalg.norm(tt - dense) <= 1e-8 * np.linalg.norm(dense)


# ===================================================================
# Exact spectra
# ===================================================================


class TestDmdSpectrumRecovery:
    def test_diagonal_system(self):
        x = np.empty((2, 12))
        x[:, 0] = [1.0, 1.0]
        for t in range(1, 12):
            x[:, t] = np.array([0.9, 0.5]) * x[:, t - 1]
        model = dmd_fit(build_snapshot_pair(x), rank=2)
        assert np.allclose(np.sort(model.eigenvalues.real), [0.5, 0.9], atol=1e-8)
        assert np.allclose(model.eigenvalues.imag, 0.0, atol=1e-8)

    def test_rotation(self):
        c, s = np.cos(0.3), np.sin(0.3)
        rotation = np.array([[c, -s], [s, c]])
        x = np.empty((2, 15))
        x[:, 0] = [1.0, 0.0]
        for t in range(1, 15):
            x[:, t] = rotation @ x[:, t - 1]
        model = dmd_fit(build_snapshot_pair(x), rank=2)
        expected = np.array([np.exp(0.3j), np.exp(-0.3j)])
        assert _multiset_gap(model.eigenvalues, expected) < 1e-8


# ===================================================================
# MAR generative recovery
# ===================================================================


class TestMarRecovery:
    @pytest.mark.parametrize("seed", range(20))
    def test_noiseless_recovery(self, seed):
        a0 = 0.95 * ortho_group.rvs(4, random_state=seed)
        b0 = 0.97 * ortho_group.rvs(5, random_state=seed + 100)
        rng = np.random.default_rng(seed)
        data = np.empty((4, 5, 60))
        data[..., 0] = rng.standard_normal((4, 5))
        for t in range(1, 60):
            data[..., t] = a0 @ data[..., t - 1] @ b0.T

        model = mar_fit_als(data)
        assert model.final_loss < 1e-16 * np.sum(data**2)
        assert np.allclose(np.kron(model.b, model.a), np.kron(b0, a0), atol=1e-6)
        history = np.asarray(model.loss_history)
        assert np.all(np.diff(history) <= 1e-12)


# ===================================================================
# Model ordering on the weather fixture
# ===================================================================


class TestWeatherOrdering:
    def test_short_term_rmse(self, weather_forecasts):
        tt, mar, test = weather_forecasts
        assert rmse(test[..., :7], tt[..., :7]) < rmse(test[..., :7], mar[..., :7])

    def test_mean_nrmse_over_long_horizon(self, weather_forecasts):
        tt, mar, test = weather_forecasts
        assert np.nanmean(framewise(tt, test).nrmse) < np.nanmean(framewise(mar, test).nrmse)

    def test_ttdmd_error_stays_bounded(self, weather_forecasts):
        tt, _, test = weather_forecasts
        nrmse = framewise(tt, test).nrmse
        assert nrmse[99] <= 3.0 * nrmse[9]

    def test_mar_error_grows(self, weather_forecasts):
        _, mar, test = weather_forecasts
        nrmse = framewise(mar, test).nrmse
        assert nrmse[99] >= 2.0 * nrmse[9]


# ===================================================================
# Live service (optional)
# ===================================================================


def _power_reachable() -> bool:
    try:
        requests.head("https://power.larc.nasa.gov", timeout=5)
    except requests.RequestException:
        return False
    return True


@pytest.mark.network
class TestLivePower:
    def test_short_term_ordering(self):
        if not _power_reachable():
            pytest.skip("NASA POWER not reachable")
        config = FetchConfig(end="2019-12-14")
        series = fetch_power(config, cache=ResponseCache(resolve_cache_dir(None)))
        train, test = split(series, SHORT_TERM_SPLIT)
        data = train.values.data

        tt_model = ttdmd_fit(build_tt_snapshot_tensors(data), rank=70)
        tt = ttdmd_forecast(tt_model, x0=data[..., -1], steps=7).values.data
        mar = mar_predict(mar_fit_als(data), data[..., -1], 7).data
        target = test.values.data

        tt_rmse = rmse(target, tt)
        assert tt_rmse < rmse(target, mar)
        assert 0.7 * 3.01 <= tt_rmse <= 1.3 * 3.01
