"""Regular latitude/longitude grids."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gridcast.errors import DataError

# Axis values are rounded to this many decimals when built from a box.
AXIS_DECIMALS = 6


def normalize_longitude(lon: np.ndarray | float) -> np.ndarray | float:
    """Map longitudes into ``[-180, 180)``."""
    return (np.asarray(lon, dtype=float) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class GeoGrid:
    """Latitude (M) by longitude (N) grid in degrees.

    Longitudes are normalized to ``[-180, 180)``; both axes must be strictly
    ascending after normalization.
    """

    lats: np.ndarray
    lons: np.ndarray

    def __post_init__(self) -> None:
        lats = np.array(self.lats, dtype=float, ndmin=1)
        lons = np.array(normalize_longitude(self.lons), dtype=float, ndmin=1)
        if lats.ndim != 1 or lons.ndim != 1 or lats.size == 0 or lons.size == 0:
            raise DataError("grid axes must be non-empty 1-D arrays")
        if not (np.all(np.isfinite(lats)) and np.all(np.isfinite(lons))):
            raise DataError("grid axes must be finite")
        if lats.min() < -90.0 or lats.max() > 90.0:
            raise DataError(f"latitudes outside [-90, 90]: {lats.min()}..{lats.max()}")
        if np.any(np.diff(lats) <= 0):
            raise DataError("latitudes must be strictly ascending")
        if np.any(np.diff(lons) <= 0):
            raise DataError("longitudes must be strictly ascending in [-180, 180)")
        lats.setflags(write=False)
        lons.setflags(write=False)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)

    @classmethod
    def from_bbox(
        cls,
        lat_min: float,
        lat_max: float,
        lon_min: float,
        lon_max: float,
        resolution: float,
    ) -> GeoGrid:
        """Grid with both corners included, stepping by ``resolution`` degrees."""
        if resolution <= 0:
            raise DataError(f"resolution must be positive, got {resolution}")
        if lat_max < lat_min or lon_max < lon_min:
            raise DataError("bounding box corners are reversed")
        return cls(lats=_axis(lat_min, lat_max, resolution),
                   lons=_axis(lon_min, lon_max, resolution))

    @property
    def shape(self) -> tuple[int, int]:
        return self.lats.size, self.lons.size

    @property
    def size(self) -> int:
        return self.lats.size * self.lons.size

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat ``(lat, lon)`` arrays of every grid point, row-major (longitude fastest)."""
        lat, lon = np.meshgrid(self.lats, self.lons, indexing="ij")
        return lat.ravel(), lon.ravel()

    def nearest_cell(self, lat: float, lon: float) -> tuple[int, int]:
        """Indices of the grid point closest in each axis."""
        i = int(np.argmin(np.abs(self.lats - lat)))
        lon = float(normalize_longitude(lon))
        gap = np.abs(self.lons - lon)
        j = int(np.argmin(np.minimum(gap, 360.0 - gap)))
        return i, j

    def to_dict(self) -> dict:
        return {"lats": self.lats.tolist(), "lons": self.lons.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> GeoGrid:
        return cls(lats=np.asarray(data["lats"]), lons=np.asarray(data["lons"]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GeoGrid):
            return NotImplemented
        return np.array_equal(self.lats, other.lats) and np.array_equal(self.lons, other.lons)

    def __hash__(self) -> int:
        return hash((self.lats.tobytes(), self.lons.tobytes()))


def _axis(start: float, stop: float, step: float) -> np.ndarray:
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), AXIS_DECIMALS)
