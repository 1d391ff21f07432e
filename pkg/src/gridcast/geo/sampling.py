"""Latitude-weighted placement of local models on a grid.

More rows than columns are sampled: with ``n`` models and weight ``w`` the
layout uses ``floor(sqrt(n / w))`` longitude columns and enough latitude rows
to hold ``n`` points. Query points are served by the sampled location that
minimizes ``sqrt((w * dlat)^2 + dlon^2)``.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from gridcast.errors import PartitionError
from gridcast.geo.clustering import ClusterPlan
from gridcast.geo.distance import haversine_matrix
from gridcast.geo.grid import GeoGrid

logger = logging.getLogger(__name__)

DEFAULT_LAT_WEIGHT = 3.0


def _spread(extent: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` evenly spaced indices in ``0..extent-1`` with a random offset."""
    base = np.floor(np.arange(count) * extent / count).astype(int)
    jitter = max(1, extent // count)
    return base + int(rng.integers(jitter))


def _layout(rows: int, cols: int, n_models: int, lat_weight: float) -> tuple[int, int]:
    n_lon = max(1, math.floor(math.sqrt(n_models / lat_weight)))
    n_lon = min(n_lon, cols)
    n_lat = math.ceil(n_models / n_lon)
    if n_lat > rows:
        n_lat = rows
        n_lon = math.ceil(n_models / rows)
    return n_lat, n_lon


def sample_cells(
    grid: GeoGrid,
    n_models: int,
    lat_weight: float = DEFAULT_LAT_WEIGHT,
    seed: int = 0,
) -> np.ndarray:
    """``n_models x 2`` array of ``(row, col)`` grid indices of the sampled locations."""
    rows, cols = grid.shape
    if not 1 <= n_models <= grid.size:
        raise PartitionError(f"n_models={n_models} must be between 1 and the grid size {grid.size}")
    if lat_weight < 1:
        raise ValueError(f"lat_weight must be >= 1, got {lat_weight}")
    n_lat, n_lon = _layout(rows, cols, n_models, lat_weight)
    rng = np.random.default_rng(seed)
    lat_idx = _spread(rows, n_lat, rng)
    lon_idx = _spread(cols, n_lon, rng)
    # column-major walk: fill every sampled row of a column before moving on
    cells = [(i, j) for j in lon_idx for i in lat_idx][:n_models]
    return np.array(cells, dtype=np.int64)


def sample_latitude_weighted(
    grid: GeoGrid,
    n_models: int,
    lat_weight: float = DEFAULT_LAT_WEIGHT,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """Sampled ``(lat, lon)`` model locations, deterministic for a seed."""
    cells = sample_cells(grid, n_models, lat_weight, seed)
    return [(float(grid.lats[i]), float(grid.lons[j])) for i, j in cells]


def sample_plan(
    grid: GeoGrid,
    n_models: int,
    lat_weight: float = DEFAULT_LAT_WEIGHT,
    seed: int = 0,
) -> ClusterPlan:
    """Sample model locations and assign every grid point by weighted distance.

    Ties go to the lowest sample index. ``inertia`` is the haversine distance
    sum to the assigned locations, as for clustering.
    """
    cells = sample_cells(grid, n_models, lat_weight, seed)
    sample_lats = grid.lats[cells[:, 0]]
    sample_lons = grid.lons[cells[:, 1]]
    lats, lons = grid.points()

    dlat = lats[:, None] - sample_lats[None, :]
    dlon = np.abs(lons[:, None] - sample_lons[None, :])
    dlon = np.minimum(dlon, 360.0 - dlon)
    weighted = np.hypot(lat_weight * dlat, dlon)
    assignment = np.argmin(weighted, axis=1)

    dist = haversine_matrix(lats, lons, sample_lats, sample_lons)
    inertia = float(dist[np.arange(lats.size), assignment].sum())
    logger.info("Sampled %d model locations (lat weight %.1f)", n_models, lat_weight)
    return ClusterPlan(
        centroids=np.column_stack([sample_lats, sample_lons]),
        assignment=assignment.reshape(grid.shape),
        inertia=inertia,
        k=n_models,
        seed=seed,
        method="sample",
        inertia_history=(inertia,),
        anchor_cells=cells,
    )
