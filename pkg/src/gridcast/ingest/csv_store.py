"""Long-format CSV store: header ``lat,lon,date,value``, one row per point and day.

Rows are written sorted by latitude, then longitude, then date. Floats are
written in shortest round-trip form and read back with round-trip precision,
so save followed by load is exact. Row numbers in errors are file line numbers
(the header is line 1).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from gridcast.errors import (
    DataError,
    DateGapError,
    DuplicateKeyError,
    IrregularGridError,
    MissingValueError,
    RaggedGridError,
    StorageError,
)
from gridcast.fileio import atomic_write_text
from gridcast.geo.grid import GeoGrid, normalize_longitude
from gridcast.ingest.series import DEFAULT_VARIABLE, FieldSeries, daily_dates
from gridcast.tensor.dense import DenseTensor

logger = logging.getLogger(__name__)

COLUMNS = ["lat", "lon", "date", "value"]
DATE_FORMAT = "%Y-%m-%d"
SPACING_RTOL = 1e-6


def _line(index: int) -> int:
    return int(index) + 2


def _check_spacing(path: Path, axis: str, values: np.ndarray) -> None:
    if values.size < 3:
        return
    steps = np.diff(values)
    close = np.isclose(steps, steps[0], rtol=SPACING_RTOL, atol=0.0)
    if not close.all():
        bad = int(np.flatnonzero(~close)[0])
        raise IrregularGridError(
            f"{path}: {axis} spacing is not uniform: step {steps[0]:g} then "
            f"{steps[bad]:g} after {axis} {values[bad]:g}",
            axis=axis,
        )


def load_grid_csv(path: str | Path, variable: str = DEFAULT_VARIABLE) -> FieldSeries:
    """Parse and validate a long-format grid CSV.

    Raises
    ------
    MissingValueError
        A row has an empty or NaN field.
    DuplicateKeyError
        A (lat, lon, date) key repeats.
    DateGapError
        The set of dates is not a run of consecutive days.
    RaggedGridError
        Some (lat, lon, date) combination of the grid is absent.
    IrregularGridError
        Latitudes or longitudes are not evenly spaced.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"date": str}, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise StorageError(f"File not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc

    if list(frame.columns) != COLUMNS:
        raise DataError(
            f"{path}: header must be {','.join(COLUMNS)}, got {','.join(frame.columns)}"
        )

    for col in ("lat", "lon", "value"):
        frame[col] = pd.to_numeric(frame[col], errors="coerce")
    missing = frame.isna().any(axis=1)
    if missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise MissingValueError(f"{path}: missing or non-numeric value on line {_line(row)}",
                                row=_line(row))
    frame["date"] = pd.to_datetime(frame["date"], format=DATE_FORMAT, errors="coerce")
    bad_dates = frame["date"].isna()
    if bad_dates.any():
        row = int(np.flatnonzero(bad_dates.to_numpy())[0])
        raise MissingValueError(f"{path}: unparseable date on line {_line(row)}", row=_line(row))
    frame["lon"] = normalize_longitude(frame["lon"].to_numpy())

    duplicated = frame.duplicated(subset=["lat", "lon", "date"])
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise DuplicateKeyError(f"{path}: duplicate key on line {_line(row)}", row=_line(row))

    lats = np.sort(frame["lat"].unique())
    lons = np.sort(frame["lon"].unique())
    _check_spacing(path, "lat", lats)
    _check_spacing(path, "lon", lons)
    days = pd.DatetimeIndex(np.sort(frame["date"].unique()))
    full = pd.date_range(days[0], days[-1], freq="D")
    gaps = full.difference(days)
    if len(gaps):
        missing_days = [d.date() for d in gaps]
        raise DateGapError(f"{path}: missing date {missing_days[0].isoformat()}",
                           missing=missing_days)

    expected = lats.size * lons.size * len(full)
    if len(frame) != expected:
        raise RaggedGridError(
            f"{path}: {len(frame)} rows but the {lats.size} x {lons.size} grid over "
            f"{len(full)} days needs {expected}"
        )

    values = np.empty((lats.size, lons.size, len(full)))
    i = np.searchsorted(lats, frame["lat"].to_numpy())
    j = np.searchsorted(lons, frame["lon"].to_numpy())
    t = ((frame["date"] - full[0]).dt.days).to_numpy()
    values[i, j, t] = frame["value"].to_numpy()

    series = FieldSeries(
        grid=GeoGrid(lats=lats, lons=lons),
        dates=daily_dates(full[0].date(), len(full)),
        values=DenseTensor(values),
        variable=variable,
    )
    logger.info("Loaded %s: grid %s, %d days", path, series.grid.shape, series.steps)
    return series


def series_frame(series: FieldSeries) -> pd.DataFrame:
    m, n, steps = series.shape
    lat, lon, day = np.meshgrid(series.grid.lats, series.grid.lons, np.arange(steps),
                                indexing="ij")
    dates = np.array([d.strftime(DATE_FORMAT) for d in series.dates])
    return pd.DataFrame({
        "lat": lat.ravel(),
        "lon": lon.ravel(),
        "date": dates[day.ravel()],
        "value": series.values.data.ravel(order="C"),
    })


def save_grid_csv(series: FieldSeries, path: str | Path) -> Path:
    """Write ``series`` in the long CSV format."""
    return atomic_write_text(path, series_frame(series).to_csv(index=False))
