"""Ingest module - field series, stores, response cache and the POWER client."""

from gridcast.ingest.cache import ResponseCache, request_key, resolve_cache_dir
from gridcast.ingest.csv_store import load_grid_csv, save_grid_csv
from gridcast.ingest.power import PowerClient, fetch_power, plan_tiles
from gridcast.ingest.series import (
    LONG_TERM_SPLIT,
    SHORT_TERM_SPLIT,
    FieldSeries,
    SplitSpec,
    load_series,
    save_series,
    series_from_bytes,
    series_to_bytes,
    split,
)

__all__ = [
    "FieldSeries",
    "SplitSpec",
    "SHORT_TERM_SPLIT",
    "LONG_TERM_SPLIT",
    "split",
    "load_series",
    "save_series",
    "series_from_bytes",
    "series_to_bytes",
    "load_grid_csv",
    "save_grid_csv",
    "ResponseCache",
    "request_key",
    "resolve_cache_dir",
    "PowerClient",
    "fetch_power",
    "plan_tiles",
]
