"""On-disk cache of raw service responses keyed by request hash."""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path

from gridcast.errors import StorageError
from gridcast.fileio import atomic_write_bytes, sha256_bytes

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = "GRIDCAST_CACHE_DIR"
DEFAULT_CACHE_DIR = "~/.gridcast/cache"


def resolve_cache_dir(configured: str | Path | None = None) -> Path:
    """``$GRIDCAST_CACHE_DIR``, else ``configured``, else ``~/.gridcast/cache``."""
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env).expanduser()
    if configured:
        return Path(configured).expanduser()
    return Path(DEFAULT_CACHE_DIR).expanduser()


def request_key(url: str, params: dict) -> str:
    """Stable hash of a request: URL plus parameters in sorted order."""
    canonical = json.dumps({"url": url, "params": params}, sort_keys=True, default=str)
    return sha256_bytes(canonical.encode("utf-8"))


class ResponseCache:
    """Stores response bodies as ``<key>.json`` files under one directory.

    Writes go through a temp file and rename, so concurrent tile fetches never
    observe a partial entry.
    """

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def _count(self, hit: bool) -> None:
        with self._lock:
            if hit:
                self.hits += 1
            else:
                self.misses += 1

    def get(self, key: str) -> bytes | None:
        path = self._path(key)
        if not path.exists():
            self._count(hit=False)
            return None
        try:
            payload = path.read_bytes()
        except OSError:
            logger.exception("Unreadable cache entry %s, ignoring", path)
            self._count(hit=False)
            return None
        self._count(hit=True)
        logger.debug("Cache hit %s", key[:12])
        return payload

    def put(self, key: str, payload: bytes) -> None:
        try:
            atomic_write_bytes(self._path(key), payload)
        except StorageError:
            logger.exception("Failed to cache response %s", key[:12])

    def clear(self) -> int:
        """Remove every entry; returns the number of files deleted."""
        removed = 0
        if not self.directory.exists():
            return 0
        for path in self.directory.glob("*.json"):
            path.unlink(missing_ok=True)
            removed += 1
        return removed
