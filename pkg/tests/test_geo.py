"""Tests for grids, haversine distance, clustering, sampling and local forecasters."""

from __future__ import annotations

import datetime as dt
import json
import logging
import math

import numpy as np
import pytest

from gridcast.errors import (
    ConfigError,
    DataError,
    EmptyClusterError,
    FormatError,
    InsufficientHistoryError,
    PartitionError,
    ShapeError,
)
from gridcast.geo.clustering import (
    ClusterPlan,
    centered_series,
    cluster_haversine_kmeans,
    load_plan,
    point_series,
    save_plan,
)
from gridcast.geo.distance import EARTH_RADIUS_KM, haversine, haversine_matrix
from gridcast.geo.grid import GeoGrid, normalize_longitude
from gridcast.geo.local import (
    LocalArModel,
    LocalForecaster,
    LocalModelSet,
    fit_cluster_models,
    fit_local_ar,
    load_local_models,
    local_forecast,
    save_local_models,
)
from gridcast.geo.sampling import sample_cells, sample_latitude_weighted, sample_plan

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _ar1(phi: float, c: float, x0: float, length: int) -> np.ndarray:
    x = np.empty(length)
    x[0] = x0
    for t in range(1, length):
        x[t] = c + phi * x[t - 1]
    return x


@pytest.fixture()
def grid() -> GeoGrid:
    return GeoGrid.from_bbox(40.0, 41.5, 10.0, 13.5, 0.5)


# ===================================================================
# GeoGrid
# ===================================================================


class TestGeoGrid:
    def test_from_bbox_includes_corners(self, grid):
        assert grid.shape == (4, 8)
        assert grid.lats[-1] == 41.5
        assert grid.lons[-1] == 13.5

    def test_points_are_row_major(self):
        g = GeoGrid(lats=[1.0, 2.0], lons=[5.0, 6.0, 7.0])
        lats, lons = g.points()
        assert lats.tolist() == [1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        assert lons.tolist() == [5.0, 6.0, 7.0, 5.0, 6.0, 7.0]

    def test_longitudes_normalized(self):
        g = GeoGrid(lats=[0.0], lons=[185.0])
        assert g.lons.tolist() == [-175.0]
        assert normalize_longitude(190.0) == pytest.approx(-170.0)
        assert normalize_longitude(180.0) == pytest.approx(-180.0)

    def test_descending_axis_rejected(self):
        with pytest.raises(DataError):
            GeoGrid(lats=[2.0, 1.0], lons=[0.0])

    def test_latitude_range(self):
        with pytest.raises(DataError):
            GeoGrid(lats=[89.5, 90.5], lons=[0.0])

    def test_reversed_box(self):
        with pytest.raises(DataError):
            GeoGrid.from_bbox(41.0, 40.0, 10.0, 11.0, 0.5)

    def test_nearest_cell_wraps_longitude(self):
        g = GeoGrid(lats=[0.0, 1.0], lons=[-179.5, 0.0, 179.0])
        assert g.nearest_cell(0.9, 179.9) == (1, 0)

    def test_dict_round_trip_and_equality(self, grid):
        assert GeoGrid.from_dict(grid.to_dict()) == grid
        assert hash(GeoGrid.from_dict(grid.to_dict())) == hash(grid)


# ===================================================================
# Haversine
# ===================================================================


class TestHaversine:
    def test_one_degree_on_equator(self):
        assert haversine((0.0, 0.0), (0.0, 1.0)) == pytest.approx(EARTH_RADIUS_KM * math.pi / 180)

    def test_antipodes(self):
        assert haversine((0.0, 0.0), (0.0, 180.0)) == pytest.approx(EARTH_RADIUS_KM * math.pi)

    def test_pole_to_pole(self):
        assert haversine((90.0, 0.0), (-90.0, 0.0)) == pytest.approx(EARTH_RADIUS_KM * math.pi)

    def test_zero_and_symmetry(self, rng):
        lats = rng.uniform(-80, 80, size=5)
        lons = rng.uniform(-180, 180, size=5)
        dist = haversine_matrix(lats, lons, lats, lons)
        assert np.allclose(np.diag(dist), 0.0, atol=1e-9)
        assert np.allclose(dist, dist.T)

    def test_crossing_antimeridian_is_short(self):
        assert haversine((0.0, 179.5), (0.0, -179.5)) == pytest.approx(
            haversine((0.0, 0.0), (0.0, 1.0)))

    def test_triangle_inequality(self, rng):
        pts = [(rng.uniform(-60, 60), rng.uniform(-180, 180)) for _ in range(3)]
        a, b, c = pts
        assert haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-9


# ===================================================================
# k-means clustering
# ===================================================================


class TestClusterKmeans:
    def test_assignment_covers_grid(self, grid):
        plan = cluster_haversine_kmeans(grid, k=4, seed=1)
        assert plan.grid_shape == grid.shape
        assert plan.cluster_sizes().sum() == grid.size
        assert np.all(plan.cluster_sizes() > 0)

    def test_every_point_on_nearest_centroid(self, grid):
        plan = cluster_haversine_kmeans(grid, k=5, seed=3)
        lats, lons = grid.points()
        dist = haversine_matrix(lats, lons, plan.centroids[:, 0], plan.centroids[:, 1])
        assert np.array_equal(np.argmin(dist, axis=1), plan.assignment.ravel())

    def test_inertia_non_increasing(self, grid):
        plan = cluster_haversine_kmeans(grid, k=6, seed=2)
        history = np.array(plan.inertia_history)
        assert np.all(np.diff(history) <= 1e-9)
        assert plan.inertia == history[-1]

    def test_deterministic_for_seed(self, grid):
        first = cluster_haversine_kmeans(grid, k=3, seed=9)
        second = cluster_haversine_kmeans(grid, k=3, seed=9)
        assert np.array_equal(first.assignment, second.assignment)
        assert np.array_equal(first.centroids, second.centroids)

    def test_single_cluster(self, grid):
        plan = cluster_haversine_kmeans(grid, k=1)
        assert np.all(plan.assignment == 0)

    def test_one_cluster_per_point(self, grid):
        plan = cluster_haversine_kmeans(grid, k=grid.size)
        assert plan.inertia == 0.0
        assert sorted(plan.assignment.ravel().tolist()) == list(range(grid.size))

    @pytest.mark.parametrize("k", [0, 33])
    def test_k_out_of_range(self, grid, k):
        with pytest.raises(PartitionError):
            cluster_haversine_kmeans(grid, k=k)

    def test_max_iters_zero_keeps_seeds(self, grid, caplog):
        with caplog.at_level(logging.INFO, logger="gridcast.geo.clustering"):
            plan = cluster_haversine_kmeans(grid, k=3, seed=4, max_iters=0)
        assert len(plan.inertia_history) == 1
        assert plan.info["converged"] is False
        assert "max_iters reached" in caplog.text

    def test_plan_file_round_trip(self, grid, tmp_path):
        plan = cluster_haversine_kmeans(grid, k=3, seed=4)
        restored = load_plan(save_plan(tmp_path / "plan.json", plan))
        assert np.array_equal(restored.assignment, plan.assignment)
        assert np.allclose(restored.centroids, plan.centroids)
        assert restored.inertia_history == plan.inertia_history

    def test_plan_version_checked(self, grid, tmp_path):
        data = cluster_haversine_kmeans(grid, k=2).to_dict()
        data["version"] = 99
        path = tmp_path / "plan.json"
        path.write_text(json.dumps(data))
        with pytest.raises(FormatError):
            load_plan(path)

    @pytest.mark.parametrize("shape,k,seed", [((5, 5), 3, 0), ((12, 9), 7, 1), ((20, 20), 12, 2)])
    def test_fixed_point_by_brute_force(self, shape, k, seed):
        grid = GeoGrid(lats=35.0 + 0.5 * np.arange(shape[0]),
                       lons=5.0 + 0.5 * np.arange(shape[1]))
        plan = cluster_haversine_kmeans(grid, k=k, seed=seed)
        lats, lons = grid.points()
        assignment = plan.assignment.ravel()
        for idx in range(grid.size):
            point = (lats[idx], lons[idx])
            dists = [haversine(point, tuple(c)) for c in plan.centroids]
            assert dists[assignment[idx]] <= min(dists) + 1e-9
        assert np.all(np.diff(plan.inertia_history) <= 1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_separates_distant_blobs(self, seed):
        blobs = GeoGrid(lats=[0.0, 0.5, 1.0, 18.0, 18.5, 19.0], lons=[10.0, 10.5, 11.0])
        assert haversine((0.0, 10.0), (18.0, 10.0)) > 1990.0
        plan = cluster_haversine_kmeans(blobs, k=2, seed=seed)
        south, north = plan.assignment[:3], plan.assignment[3:]
        assert np.all(south == south[0, 0])
        assert np.all(north == north[0, 0])
        assert south[0, 0] != north[0, 0]


class TestClusterSeries:
    def test_centered_series_is_cluster_mean(self, series_factory, rng):
        series = series_factory(rng.standard_normal((2, 3, 6)))
        assignment = np.array([[0, 0, 1], [1, 1, 0]])
        plan = ClusterPlan(centroids=np.zeros((2, 2)), assignment=assignment, inertia=0.0, k=2)
        centered = centered_series(series, plan)
        values = series.values.data
        assert np.allclose(centered[0], values[assignment == 0].mean(axis=0))
        assert np.allclose(centered[1], values[assignment == 1].mean(axis=0))

    def test_empty_cluster_raises(self, series_factory, rng):
        series = series_factory(rng.standard_normal((2, 2, 4)))
        plan = ClusterPlan(
            centroids=np.zeros((2, 2)), assignment=np.zeros((2, 2)), inertia=0.0, k=2
        )
        with pytest.raises(EmptyClusterError) as excinfo:
            centered_series(series, plan)
        assert excinfo.value.cluster == 1

    def test_point_series_uses_nearest_cell(self, series_factory, rng):
        series = series_factory(rng.standard_normal((3, 3, 5)))
        centroid = (series.grid.lats[2] + 0.1, series.grid.lons[1] - 0.1)
        plan = ClusterPlan(centroids=np.array([centroid]), assignment=np.zeros((3, 3)),
                           inertia=0.0, k=1)
        assert np.array_equal(point_series(series, plan)[0], series.values.data[2, 1])

    def test_grid_mismatch(self, series_factory, rng):
        series = series_factory(rng.standard_normal((2, 2, 4)))
        plan = ClusterPlan(
            centroids=np.zeros((1, 2)), assignment=np.zeros((3, 3)), inertia=0.0, k=1
        )
        with pytest.raises(ShapeError):
            centered_series(series, plan)


# ===================================================================
# Latitude-weighted sampling
# ===================================================================


class TestSampling:
    def test_count_and_distinct(self, grid):
        cells = sample_cells(grid, 6, seed=0)
        assert cells.shape == (6, 2)
        assert len({tuple(c) for c in cells.tolist()}) == 6
        assert np.all(cells[:, 0] < grid.shape[0])
        assert np.all(cells[:, 1] < grid.shape[1])

    def test_more_latitude_rows_than_longitude_columns(self):
        big = GeoGrid.from_bbox(0.0, 20.0, 0.0, 20.0, 1.0)
        cells = sample_cells(big, 12, lat_weight=3.0, seed=0)
        assert len(set(cells[:, 0].tolist())) > len(set(cells[:, 1].tolist()))

    def test_deterministic_for_seed(self, grid):
        first = sample_latitude_weighted(grid, 5, seed=7)
        assert first == sample_latitude_weighted(grid, 5, seed=7)

    def test_every_grid_point_sampled(self, grid):
        cells = sample_cells(grid, grid.size)
        assert len({tuple(c) for c in cells.tolist()}) == grid.size

    def test_invalid_count(self, grid):
        with pytest.raises(PartitionError):
            sample_cells(grid, 0)
        with pytest.raises(PartitionError):
            sample_cells(grid, grid.size + 1)

    def test_invalid_weight(self, grid):
        with pytest.raises(ValueError):
            sample_cells(grid, 3, lat_weight=0.5)

    def test_plan_assigns_by_weighted_distance(self, grid):
        plan = sample_plan(grid, 4, lat_weight=3.0, seed=1)
        assert plan.method == "sample"
        assert plan.k == 4
        lats, lons = grid.points()
        weighted = np.hypot(3.0 * (lats[:, None] - plan.centroids[None, :, 0]),
                            lons[:, None] - plan.centroids[None, :, 1])
        assert np.array_equal(np.argmin(weighted, axis=1), plan.assignment.ravel())

    def test_sampled_cell_served_by_itself(self, grid):
        plan = sample_plan(grid, 5, seed=2)
        for c, (i, j) in enumerate(plan.anchor_cells):
            assert plan.assignment[i, j] == c


# ===================================================================
# Local AR forecasters
# ===================================================================


class TestFitLocalAr:
    def test_recovers_ar1(self):
        model = fit_local_ar(_ar1(0.5, 1.0, 10.0, 30), p=1, h=3)
        assert model.coefficients[0, 0] == pytest.approx(0.5)
        assert model.intercepts[0] == pytest.approx(1.0)
        assert not model.persistence

    def test_recursive_forecast(self):
        x = _ar1(0.5, 1.0, 10.0, 30)
        model = fit_local_ar(x[:25], p=1, h=5)
        assert np.allclose(model.forecast(x[None, :25], 5)[0], x[25:])

    def test_direct_matches_recursive_on_exact_ar(self):
        x = _ar1(0.8, 0.5, 3.0, 40)
        recursive = fit_local_ar(x[:30], p=1, h=4)
        direct = fit_local_ar(x[:30], p=1, h=4, strategy="direct")
        assert direct.coefficients.shape == (4, 1)
        assert direct.coefficients[2, 0] == pytest.approx(0.8**3)
        history = x[None, :30]
        assert np.allclose(direct.forecast(history, 4), recursive.forecast(history, 4))
        assert np.allclose(direct.forecast(history, 4)[0], x[30:34])

    def test_direct_cannot_exceed_horizon(self):
        model = fit_local_ar(_ar1(0.5, 1.0, 10.0, 30), p=1, h=2, strategy="direct")
        with pytest.raises(ConfigError, match="h=2"):
            model.forecast(np.ones((1, 5)), 3)

    def test_constant_series(self):
        model = fit_local_ar(np.full(20, 7.0), p=3, h=2)
        assert np.allclose(model.coefficients, 0.0)
        assert model.intercepts[0] == pytest.approx(7.0)
        assert np.allclose(model.forecast(np.full((2, 5), 7.0), 4), 7.0)

    def test_short_series_falls_back_to_persistence(self, caplog):
        model = fit_local_ar(np.arange(4.0), p=3, h=2)
        assert model.persistence
        assert "persistence" in caplog.text
        assert model.forecast(np.array([[1.0, 2.0, 3.0]]), 2).tolist() == [[3.0, 3.0]]

    def test_too_short_for_lookback(self):
        with pytest.raises(InsufficientHistoryError):
            fit_local_ar(np.arange(3.0), p=3)

    @pytest.mark.parametrize("kwargs", [{"p": 0}, {"h": 0}, {"strategy": "sideways"}])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValueError):
            fit_local_ar(np.arange(20.0), **kwargs)

    def test_history_shorter_than_lookback(self):
        model = fit_local_ar(_ar1(0.5, 1.0, 10.0, 30), p=4)
        with pytest.raises(InsufficientHistoryError):
            model.forecast(np.ones((1, 3)), 1)

    def test_satisfies_protocol(self):
        assert isinstance(fit_local_ar(np.arange(20.0), p=2), LocalForecaster)


class TestLocalForecast:
    def test_shape_and_dates(self, small_series):
        plan = sample_plan(small_series.grid, 2, seed=0)
        models = fit_cluster_models(plan, small_series, p=2, h=3)
        forecast = local_forecast(plan, models, small_series, 3)
        assert forecast.shape == (3, 4, 3)
        assert forecast.start == small_series.end + dt.timedelta(days=1)

    def test_each_point_uses_its_cluster_model(self, series_factory):
        values = np.stack([
            np.stack([_ar1(0.5, 1.0, 10.0 + j, 20) for j in range(2)]),
            np.stack([_ar1(0.9, 0.2, 5.0 + j, 20) for j in range(2)]),
        ])
        series = series_factory(values)
        plan = ClusterPlan(centroids=np.zeros((2, 2)), assignment=np.array([[0, 0], [1, 1]]),
                           inertia=0.0, k=2)
        models = fit_cluster_models(plan, series, p=1, h=2)
        assert models[0].coefficients[0, 0] == pytest.approx(0.5)
        assert models[1].coefficients[0, 0] == pytest.approx(0.9)
        forecast = local_forecast(plan, models, series, 2).values.data
        assert forecast[0, 1, 0] == pytest.approx(1.0 + 0.5 * values[0, 1, -1])
        assert forecast[1, 0, 0] == pytest.approx(0.2 + 0.9 * values[1, 0, -1])

    def test_sample_plan_trains_on_sampled_cells(self, series_factory, rng):
        values = rng.standard_normal((3, 3, 12))
        values[1, 1] = _ar1(0.7, 0.0, 4.0, 12)
        series = series_factory(values)
        plan = ClusterPlan(centroids=np.array([[series.grid.lats[1], series.grid.lons[1]]]),
                           assignment=np.zeros((3, 3)), inertia=0.0, k=1, method="sample",
                           anchor_cells=np.array([[1, 1]]))
        (model,) = fit_cluster_models(plan, series, p=1, h=1)
        assert model.coefficients[0, 0] == pytest.approx(0.7)

    def test_model_count_mismatch(self, small_series):
        plan = sample_plan(small_series.grid, 2, seed=0)
        with pytest.raises(ShapeError):
            local_forecast(plan, [], small_series, 1)


class TestLocalModelSet:
    def test_file_round_trip(self, small_series, tmp_path):
        plan = cluster_haversine_kmeans(small_series.grid, k=3, seed=0)
        models = fit_cluster_models(plan, small_series, p=2, h=2, strategy="direct")
        model_set = LocalModelSet(plan=plan, models=models)
        restored = load_local_models(save_local_models(tmp_path / "model.json", model_set))
        assert np.array_equal(restored.plan.assignment, plan.assignment)
        assert all(isinstance(m, LocalArModel) for m in restored.models)
        assert np.allclose(restored.forecast(small_series, 2).values.data,
                           model_set.forecast(small_series, 2).values.data)

    def test_model_count_checked(self, small_series):
        plan = cluster_haversine_kmeans(small_series.grid, k=2, seed=0)
        with pytest.raises(ShapeError):
            LocalModelSet(plan=plan, models=())

    def test_bad_version(self, small_series):
        plan = cluster_haversine_kmeans(small_series.grid, k=1)
        models = fit_cluster_models(plan, small_series, p=1)
        data = LocalModelSet(plan=plan, models=models).to_dict()
        data["version"] = 2
        with pytest.raises(FormatError):
            LocalModelSet.from_dict(data)

    def test_not_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            load_local_models(path)
