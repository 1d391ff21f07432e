"""Shared fixtures for the gridcast test suite."""

from __future__ import annotations

import datetime as dt
import json
import textwrap
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest

from gridcast.config import FetchConfig, RunConfig
from gridcast.geo.grid import GeoGrid
from gridcast.ingest.series import FieldSeries, daily_dates
from gridcast.tensor.dense import DenseTensor

# ---------------------------------------------------------------------------
# Random data
# ---------------------------------------------------------------------------


@pytest.fixture()
def rng() -> np.random.Generator:
    """Seeded generator so every test draws the same numbers."""
    return np.random.default_rng(12345)


def make_series(
    values: np.ndarray,
    lat0: float = 30.0,
    lon0: float = 4.0,
    resolution: float = 0.5,
    start: dt.date = dt.date(2020, 1, 1),
) -> FieldSeries:
    """FieldSeries on a regular grid anchored at (lat0, lon0)."""
    m, n, t = values.shape
    grid = GeoGrid(
        lats=lat0 + resolution * np.arange(m),
        lons=lon0 + resolution * np.arange(n),
    )
    return FieldSeries(grid=grid, dates=daily_dates(start, t), values=DenseTensor(values))


@pytest.fixture()
def small_series(rng) -> FieldSeries:
    """Random 3 x 4 x 10 series starting 2020-01-01."""
    return make_series(rng.normal(15.0, 5.0, size=(3, 4, 10)))


@pytest.fixture()
def stable_operator(rng):
    """Factory for random real matrices with spectral radius ``radius``."""

    def factory(n: int, radius: float = 0.95) -> np.ndarray:
        a = rng.standard_normal((n, n))
        return a * (radius / np.max(np.abs(np.linalg.eigvals(a))))

    return factory


# ---------------------------------------------------------------------------
# Configuration fixtures
# ---------------------------------------------------------------------------


@pytest.fixture()
def run_config(tmp_path) -> RunConfig:
    """Default config writing into a temporary directory."""
    return RunConfig.default().with_overrides(output_dir=str(tmp_path / "runs"))


@pytest.fixture()
def config_file(tmp_path) -> Path:
    """YAML config using the synthetic linear dataset and TT-DMD."""
    content = textwrap.dedent(f"""\
        dataset:
          source: synthetic
          synthetic: linear
        split:
          test_length: 7
        model:
          ttdmd:
            energy: 1.0
        horizon: 7
        output_dir: {tmp_path / "runs"}
        cache:
          directory: {tmp_path / "cache"}
    """)
    path = tmp_path / "gridcast.yaml"
    path.write_text(content)
    return path


@pytest.fixture()
def fetch_config() -> FetchConfig:
    """Small 1 x 2 degree box over three days."""
    return FetchConfig(
        lat_min=30.0,
        lat_max=31.0,
        lon_min=4.0,
        lon_max=6.0,
        resolution=0.5,
        start="2020-01-01",
        end="2020-01-03",
        retries=0,
        max_in_flight=2,
    )


# ---------------------------------------------------------------------------
# HTTP fixtures
# ---------------------------------------------------------------------------


def power_payload(lats, lons, dates, value_fn, parameter: str = "T2M_MAX") -> dict:
    """GeoJSON FeatureCollection shaped like a POWER regional response."""
    features = []
    for lat in lats:
        for lon in lons:
            series = {d.strftime("%Y%m%d"): value_fn(lat, lon, d) for d in dates}
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat, 100.0]},
                "properties": {"parameter": {parameter: series}},
            })
    return {"type": "FeatureCollection", "features": features}


@pytest.fixture()
def mock_session():
    """requests.Session stand-in answering every GET from ``session.payload_for``."""
    session = MagicMock()

    def get(url, params=None, timeout=None):
        response = MagicMock()
        response.status_code = 200
        response.content = json.dumps(session.payload_for(url, params)).encode("utf-8")
        return response

    session.get.side_effect = get
    return session


@pytest.fixture()
def series_factory():
    """:func:`make_series` as a fixture."""
    return make_series


@pytest.fixture()
def payload_factory():
    """:func:`power_payload` as a fixture."""
    return power_payload
