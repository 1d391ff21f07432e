"""NASA POWER daily data client.

Boxes are split into tiles no wider than the regional service limit; tiles
narrower than the regional minimum are requested point by point. Responses
are cached by request hash, so a repeated fetch issues no HTTP calls. Service
points are snapped onto the requested grid axes.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from gridcast.errors import DateGapError, MissingValueError, PowerApiError, PowerSchemaError
from gridcast.geo.grid import GeoGrid, normalize_longitude
from gridcast.ingest.cache import ResponseCache, request_key
from gridcast.ingest.series import FieldSeries, daily_dates
from gridcast.tensor.dense import DenseTensor

if TYPE_CHECKING:
    from gridcast.config import FetchConfig

logger = logging.getLogger(__name__)

FILL_VALUE = -999.0
MAX_FILL_GAP = 2
RETRY_STATUSES = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class Tile:
    """Index ranges (inclusive start, exclusive stop) into the grid axes."""

    lat_start: int
    lat_stop: int
    lon_start: int
    lon_stop: int


def _chunks(axis: np.ndarray, max_span: float) -> list[tuple[int, int]]:
    chunks = []
    start = 0
    while start < axis.size:
        stop = start + 1
        while stop < axis.size and axis[stop] - axis[start] <= max_span + 1e-9:
            stop += 1
        chunks.append((start, stop))
        start = stop
    return chunks


def plan_tiles(grid: GeoGrid, max_degrees: float) -> list[Tile]:
    """Cover the grid with tiles spanning at most ``max_degrees`` per axis."""
    return [
        Tile(la, lb, oa, ob)
        for la, lb in _chunks(grid.lats, max_degrees)
        for oa, ob in _chunks(grid.lons, max_degrees)
    ]


def build_session(retries: int, backoff: float) -> requests.Session:
    """Session that retries transient HTTP failures with exponential backoff."""
    retry = Retry(
        total=retries,
        backoff_factor=backoff,
        status_forcelist=RETRY_STATUSES,
        allowed_methods=("GET",),
        raise_on_status=False,
    )
    session = requests.Session()
    adapter = HTTPAdapter(max_retries=retry)
    session.mount("https://", adapter)
    session.mount("http://", adapter)
    return session


class PowerClient:
    """Fetches a gridded daily series from the POWER service.

    A bounded semaphore limits the number of requests in flight.
    """

    def __init__(
        self,
        config: FetchConfig,
        cache: ResponseCache | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self.config = config
        self.cache = cache
        self.session = session or build_session(config.retries, config.backoff)
        self._semaphore = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self.requests_sent = 0
        self._lock = threading.Lock()

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------

    def fetch(self) -> FieldSeries:
        """Fetch the configured box and date range."""
        cfg = self.config
        grid = GeoGrid.from_bbox(cfg.lat_min, cfg.lat_max, cfg.lon_min, cfg.lon_max,
                                 cfg.resolution)
        return self.fetch_grid(grid, cfg.start_date, cfg.end_date)

    def fetch_grid(self, grid: GeoGrid, start: dt.date, end: dt.date) -> FieldSeries:
        if end < start:
            raise PowerApiError(f"end date {end} precedes start date {start}")
        dates = daily_dates(start, (end - start).days + 1)
        requests_ = self._plan_requests(grid, start, end)
        logger.info("Fetching %s over %d days in %d request(s)",
                    grid.shape, len(dates), len(requests_))

        workers = max(1, min(self.config.max_in_flight, len(requests_)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            responses = list(pool.map(lambda req: self._get_json(*req), requests_))

        values = np.full(grid.shape + (len(dates),), np.nan)
        for payload in responses:
            for lat, lon, series in self._parse(payload):
                self._place(values, grid, start, lat, lon, series)
        values = self._fill_gaps(values, grid, dates)
        return FieldSeries(grid=grid, dates=dates, values=DenseTensor(values),
                           variable=self.config.parameter)

    # ------------------------------------------------------------------
    # Requests
    # ------------------------------------------------------------------

    def _plan_requests(self, grid: GeoGrid, start: dt.date,
                       end: dt.date) -> list[tuple[str, dict[str, Any]]]:
        cfg = self.config
        common = {
            "parameters": cfg.service_parameter,
            "community": cfg.community,
            "start": start.strftime("%Y%m%d"),
            "end": end.strftime("%Y%m%d"),
            "format": "JSON",
        }
        planned: list[tuple[str, dict[str, Any]]] = []
        for tile in plan_tiles(grid, cfg.max_tile_degrees):
            lats = grid.lats[tile.lat_start : tile.lat_stop]
            lons = grid.lons[tile.lon_start : tile.lon_stop]
            narrow = (lats[-1] - lats[0] < cfg.min_regional_degrees
                      or lons[-1] - lons[0] < cfg.min_regional_degrees)
            if narrow:
                for lat in lats:
                    for lon in lons:
                        params = dict(common, latitude=float(lat), longitude=float(lon))
                        planned.append((cfg.point_endpoint, params))
            else:
                params = dict(common)
                params.update({
                    "latitude-min": float(lats[0]),
                    "latitude-max": float(lats[-1]),
                    "longitude-min": float(lons[0]),
                    "longitude-max": float(lons[-1]),
                })
                planned.append((cfg.endpoint, params))
        return planned

    def _get_json(self, url: str, params: dict[str, Any]) -> Any:
        key = request_key(url, params)
        payload = self.cache.get(key) if self.cache is not None else None
        if payload is None:
            payload = self._download(url, params)
            parsed = _decode(payload, url)
            if self.cache is not None:
                self.cache.put(key, payload)
            return parsed
        return _decode(payload, url)

    def _download(self, url: str, params: dict[str, Any]) -> bytes:
        with self._semaphore:
            with self._lock:
                self.requests_sent += 1
            try:
                response = self.session.get(url, params=params, timeout=self.config.timeout)
            except requests.RequestException as exc:
                raise PowerApiError(f"request to {url} failed: {exc}", url=url) from exc
        if response.status_code != 200:
            raise PowerApiError(
                f"POWER returned HTTP {response.status_code} for {url}",
                status=response.status_code,
                url=url,
            )
        return response.content

    # ------------------------------------------------------------------
    # Assembly
    # ------------------------------------------------------------------

    def _parse(self, payload: Any) -> list[tuple[float, float, dict[str, float]]]:
        """``(lat, lon, {YYYYMMDD: value})`` for every point in a response."""
        parameter = self.config.service_parameter
        try:
            features = payload["features"] if "features" in payload else [payload]
            points = []
            for feature in features:
                lon, lat = feature["geometry"]["coordinates"][:2]
                series = feature["properties"]["parameter"][parameter]
                if not isinstance(series, dict):
                    raise TypeError("parameter block is not a mapping")
                points.append((float(lat), float(lon), series))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise PowerSchemaError(f"unexpected POWER response structure: {exc!r}") from exc
        return points

    def _place(self, values: np.ndarray, grid: GeoGrid, start: dt.date,
               lat: float, lon: float, series: dict[str, float]) -> None:
        i, j = grid.nearest_cell(lat, lon)
        tolerance = self.config.resolution / 2 + 1e-6
        gap = abs(float(normalize_longitude(lon)) - grid.lons[j])
        if abs(grid.lats[i] - lat) > tolerance or min(gap, 360.0 - gap) > tolerance:
            logger.debug("Service point (%.3f, %.3f) is off the grid, skipped", lat, lon)
            return
        steps = values.shape[2]
        for stamp, value in series.items():
            try:
                day = dt.datetime.strptime(stamp, "%Y%m%d").date()
                value = float(value)
            except (TypeError, ValueError) as exc:
                raise PowerSchemaError(f"bad entry {stamp!r}: {value!r}") from exc
            t = (day - start).days
            if 0 <= t < steps:
                values[i, j, t] = np.nan if value == FILL_VALUE else value

    def _fill_gaps(self, values: np.ndarray, grid: GeoGrid,
                   dates: tuple[dt.date, ...]) -> np.ndarray:
        empty_days = np.all(np.isnan(values), axis=(0, 1))
        if empty_days.any() and not self.config.forward_fill:
            missing = [dates[t] for t in np.flatnonzero(empty_days)]
            raise DateGapError(f"POWER returned no data for {missing[0].isoformat()}",
                               missing=missing)
        if self.config.forward_fill and np.isnan(values).any():
            m, n, steps = values.shape
            frame = pd.DataFrame(values.reshape(m * n, steps).T)
            filled = frame.ffill(limit=MAX_FILL_GAP).to_numpy().T.reshape(m, n, steps)
            count = int(np.isnan(values).sum() - np.isnan(filled).sum())
            logger.warning("Forward-filled %d missing value(s) (gaps up to %d days)",
                           count, MAX_FILL_GAP)
            values = filled
        holes = np.argwhere(np.isnan(values))
        if holes.size:
            i, j, t = (int(v) for v in holes[0])
            raise MissingValueError(
                f"no value at lat={grid.lats[i]}, lon={grid.lons[j]} on "
                f"{dates[t].isoformat()} ({len(holes)} missing in total)"
            )
        return values


def _decode(payload: bytes, url: str) -> Any:
    try:
        return json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PowerSchemaError(f"response from {url} is not JSON: {exc}") from exc


def fetch_power(
    config: FetchConfig,
    cache: ResponseCache | None = None,
    session: requests.Session | None = None,
) -> FieldSeries:
    """Fetch the box, dates and parameter named by ``config``."""
    return PowerClient(config, cache=cache, session=session).fetch()
