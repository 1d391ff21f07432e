"""Tests for the bundled synthetic series."""

from __future__ import annotations

import numpy as np
import pytest

from gridcast.errors import ConfigError
from gridcast.synthetic import (
    FIXTURE_START,
    WEATHER_SHAPE,
    linear_fixture,
    stable_spectrum,
    synthetic_series,
    weather_fixture,
)


class TestStableSpectrum:
    @pytest.mark.parametrize("rank", [1, 4, 7])
    def test_closed_under_conjugation(self, rng, rank):
        values = stable_spectrum(rng, rank)
        assert values.size == rank
        assert np.allclose(np.sort_complex(values), np.sort_complex(values.conj()))
        assert np.all((np.abs(values) >= 0.8) & (np.abs(values) <= 0.99))


class TestLinearFixture:
    def test_shape_and_dates(self):
        series = linear_fixture(shape=(3, 4), steps=12, rank=2, seed=1)
        assert series.shape == (3, 4, 12)
        assert series.start == FIXTURE_START
        assert series.variable == "LINEAR"

    def test_deterministic(self):
        first = linear_fixture(seed=7).values.data
        assert np.array_equal(first, linear_fixture(seed=7).values.data)
        assert not np.array_equal(first, linear_fixture(seed=8).values.data)

    def test_snapshot_rank(self):
        values = linear_fixture(shape=(5, 6), steps=30, rank=4, seed=2).values.data
        snapshots = values.reshape(30, 30, order="F")
        assert np.linalg.matrix_rank(snapshots, tol=1e-9 * np.abs(snapshots).max()) == 4

    def test_rank_out_of_range(self):
        with pytest.raises(ValueError):
            linear_fixture(shape=(2, 2), steps=10, rank=5)


class TestWeatherFixture:
    def test_default_shape(self):
        series = weather_fixture(steps=40)
        assert series.shape == WEATHER_SHAPE + (40,)
        assert series.variable == "TMAX"

    def test_noise_is_seeded(self):
        a = weather_fixture(steps=20, seed=4).values.data
        assert np.array_equal(a, weather_fixture(steps=20, seed=4).values.data)
        assert not np.array_equal(a, weather_fixture(steps=20, seed=5).values.data)

    def test_noiseless_field_has_seven_modes(self):
        values = weather_fixture(shape=(10, 12), steps=200, noise=0.0).values.data
        snapshots = values.reshape(120, 200, order="F")
        sigma = np.linalg.svd(snapshots, compute_uv=False)
        assert np.sum(sigma > 1e-8 * sigma[0]) == 7


class TestSyntheticSeries:
    def test_named_generators(self):
        assert synthetic_series("linear").shape == (8, 10, 120)

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            synthetic_series("storm")
