"""Gridded daily field series, train/test splits and the binary series format.

Binary layout (little-endian)::

    magic     4 bytes   b"GCFS"
    version   1 byte    1
    variable  uint16 length + UTF-8 bytes
    start     10 bytes  ISO date of the first slice
    M, N      uint64
    lats      M float64
    lons      N float64
    values    tensor block (M x N x T)
"""

from __future__ import annotations

import datetime as dt
import io
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gridcast.errors import DateGapError, FormatError, MissingValueError, ShapeError, SplitError
from gridcast.fileio import atomic_write_bytes, read_bytes
from gridcast.geo.grid import GeoGrid
from gridcast.tensor.dense import DenseTensor, as_tensor
from gridcast.tensor.io import read_tensor_block, write_tensor_block

logger = logging.getLogger(__name__)

MAGIC = b"GCFS"
VERSION = 1
DEFAULT_VARIABLE = "TMAX"
ONE_DAY = dt.timedelta(days=1)


def daily_dates(start: dt.date, count: int) -> tuple[dt.date, ...]:
    return tuple(start + i * ONE_DAY for i in range(count))


def _check_consecutive(dates: tuple[dt.date, ...]) -> None:
    missing: list[dt.date] = []
    for prev, cur in zip(dates, dates[1:]):
        if cur <= prev:
            raise DateGapError(f"dates not strictly increasing at {cur.isoformat()}")
        day = prev + ONE_DAY
        while day < cur:
            missing.append(day)
            day += ONE_DAY
    if missing:
        shown = ", ".join(d.isoformat() for d in missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise DateGapError(f"missing dates: {shown}{more}", missing=missing)


@dataclass(frozen=True)
class FieldSeries:
    """Daily measurements on a lat/lon grid: ``values`` is M x N x T."""

    grid: GeoGrid
    dates: tuple[dt.date, ...]
    values: DenseTensor
    variable: str = DEFAULT_VARIABLE

    def __post_init__(self) -> None:
        values = as_tensor(self.values)
        dates = tuple(self.dates)
        if values.order != 3:
            raise ShapeError(f"field series values must be M x N x T, got {values.shape}")
        if values.shape[:2] != self.grid.shape:
            raise ShapeError(f"values {values.shape[:2]} do not match grid {self.grid.shape}")
        if len(dates) != values.shape[2]:
            raise ShapeError(f"{len(dates)} dates for {values.shape[2]} time slices")
        if np.iscomplexobj(values.data):
            raise ShapeError("field series values must be real")
        nan = np.argwhere(~np.isfinite(values.data))
        if nan.size:
            i, j, t = (int(v) for v in nan[0])
            raise MissingValueError(
                f"missing value at lat={self.grid.lats[i]}, lon={self.grid.lons[j]}, "
                f"date={dates[t].isoformat()}"
            )
        _check_consecutive(dates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def steps(self) -> int:
        return len(self.dates)

    @property
    def start(self) -> dt.date:
        return self.dates[0]

    @property
    def end(self) -> dt.date:
        return self.dates[-1]

    def field(self, date: dt.date) -> np.ndarray:
        """M x N slice for one calendar day."""
        return self.values.data[:, :, self.index_of(date)]

    def index_of(self, date: dt.date) -> int:
        offset = (date - self.start).days
        if not 0 <= offset < self.steps:
            raise SplitError(f"{date.isoformat()} is outside {self.start}..{self.end}")
        return offset

    def between(self, start: dt.date, end: dt.date) -> FieldSeries:
        """Sub-series for ``start..end`` inclusive."""
        lo = self.index_of(start)
        hi = self.index_of(end)
        if hi < lo:
            raise SplitError(f"empty range {start.isoformat()}..{end.isoformat()}")
        return FieldSeries(
            grid=self.grid,
            dates=self.dates[lo : hi + 1],
            values=DenseTensor(self.values.data[:, :, lo : hi + 1]),
            variable=self.variable,
        )

    def continuation(self, values: np.ndarray) -> FieldSeries:
        """Series on the same grid whose dates start the day after ``end``."""
        values = np.asarray(values, dtype=float)
        return FieldSeries(
            grid=self.grid,
            dates=daily_dates(self.end + ONE_DAY, values.shape[2]),
            values=DenseTensor(values),
            variable=self.variable,
        )

    def with_values(self, values: np.ndarray, start: dt.date | None = None) -> FieldSeries:
        values = np.asarray(values, dtype=float)
        return FieldSeries(
            grid=self.grid,
            dates=daily_dates(start or self.start, values.shape[2]),
            values=DenseTensor(values),
            variable=self.variable,
        )


# ----------------------------------------------------------------------
# Splits
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Inclusive train and test date ranges with ``train_end < test_start``."""

    train_start: dt.date
    train_end: dt.date
    test_start: dt.date
    test_end: dt.date

    def __post_init__(self) -> None:
        if self.train_end < self.train_start:
            raise SplitError("train range is empty")
        if self.test_end < self.test_start:
            raise SplitError("test range is empty")
        if self.train_end >= self.test_start:
            raise SplitError(
                f"train range ends {self.train_end.isoformat()}, on or after test start "
                f"{self.test_start.isoformat()}"
            )

    @classmethod
    def tail(cls, series: FieldSeries, test_length: int) -> SplitSpec:
        """Last ``test_length`` days for testing, everything before for training."""
        if not 1 <= test_length < series.steps:
            raise SplitError(f"test length {test_length} must be in 1..{series.steps - 1}")
        boundary = series.steps - test_length
        return cls(series.start, series.dates[boundary - 1], series.dates[boundary], series.end)

    @property
    def train_length(self) -> int:
        return (self.train_end - self.train_start).days + 1

    @property
    def test_length(self) -> int:
        return (self.test_end - self.test_start).days + 1


SHORT_TERM_SPLIT = SplitSpec(
    dt.date(2015, 10, 30), dt.date(2019, 12, 7), dt.date(2019, 12, 8), dt.date(2019, 12, 14)
)
LONG_TERM_SPLIT = SplitSpec(
    dt.date(2015, 10, 30), dt.date(2019, 12, 7), dt.date(2019, 12, 8), dt.date(2020, 8, 13)
)


def split(series: FieldSeries, spec: SplitSpec) -> tuple[FieldSeries, FieldSeries]:
    """``(train, test)`` sub-series; both ranges must lie within the series dates."""
    for label, day in (("train_start", spec.train_start), ("test_end", spec.test_end)):
        if not series.start <= day <= series.end:
            raise SplitError(
                f"{label} {day.isoformat()} outside data range "
                f"{series.start.isoformat()}..{series.end.isoformat()}"
            )
    train = series.between(spec.train_start, spec.train_end)
    test = series.between(spec.test_start, spec.test_end)
    logger.info("Split %d train days, %d test days", train.steps, test.steps)
    return train, test


# ----------------------------------------------------------------------
# Binary format
# ----------------------------------------------------------------------


def series_to_bytes(series: FieldSeries) -> bytes:
    buffer = io.BytesIO()
    name = series.variable.encode("utf-8")
    buffer.write(MAGIC)
    buffer.write(struct.pack("<BH", VERSION, len(name)))
    buffer.write(name)
    buffer.write(series.start.isoformat().encode("ascii"))
    m, n = series.grid.shape
    buffer.write(struct.pack("<QQ", m, n))
    buffer.write(np.asarray(series.grid.lats, dtype="<f8").tobytes())
    buffer.write(np.asarray(series.grid.lons, dtype="<f8").tobytes())
    write_tensor_block(buffer, series.values)
    return buffer.getvalue()


def _take(stream: io.BytesIO, count: int) -> bytes:
    chunk = stream.read(count)
    if len(chunk) != count:
        raise FormatError("truncated field series file")
    return chunk


def series_from_bytes(payload: bytes) -> FieldSeries:
    stream = io.BytesIO(payload)
    if _take(stream, 4) != MAGIC:
        raise FormatError("not a field series file (bad magic)")
    version, name_len = struct.unpack("<BH", _take(stream, 3))
    if version != VERSION:
        raise FormatError(f"unsupported field series version {version}")
    variable = _take(stream, name_len).decode("utf-8")
    try:
        start = dt.date.fromisoformat(_take(stream, 10).decode("ascii"))
    except ValueError as exc:
        raise FormatError(f"bad start date in field series: {exc}") from exc
    m, n = struct.unpack("<QQ", _take(stream, 16))
    lats = np.frombuffer(_take(stream, 8 * m), dtype="<f8").astype(float)
    lons = np.frombuffer(_take(stream, 8 * n), dtype="<f8").astype(float)
    values = read_tensor_block(stream)
    if stream.read(1):
        raise FormatError("trailing bytes after field series")
    if values.order != 3:
        raise FormatError(f"field series tensor has order {values.order}")
    return FieldSeries(
        grid=GeoGrid(lats=lats, lons=lons),
        dates=daily_dates(start, values.shape[2]),
        values=values,
        variable=variable,
    )


def save_series(path: str | Path, series: FieldSeries) -> Path:
    return atomic_write_bytes(path, series_to_bytes(series))


def load_series(path: str | Path) -> FieldSeries:
    return series_from_bytes(read_bytes(path))
