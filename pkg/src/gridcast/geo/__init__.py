"""Geo module - haversine geometry, model placement and local forecasters."""

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

__all__ = [
    "EARTH_RADIUS_KM",
    "GeoGrid",
    "normalize_longitude",
    "haversine",
    "haversine_matrix",
    "ClusterPlan",
    "cluster_haversine_kmeans",
    "centered_series",
    "point_series",
    "save_plan",
    "load_plan",
    "sample_cells",
    "sample_latitude_weighted",
    "sample_plan",
    "LocalArModel",
    "LocalForecaster",
    "fit_local_ar",
    "fit_cluster_models",
    "local_forecast",
    "LocalModelSet",
    "save_local_models",
    "load_local_models",
]
