"""Atomic file writes and content hashing shared by every artifact writer."""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from pathlib import Path

from gridcast.errors import StorageError

logger = logging.getLogger(__name__)


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """Write ``payload`` to ``path`` atomically (write tmp then rename)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}_", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp_path, path)
        except BaseException:
            # Clean up temp file on any failure
            try:
                os.unlink(tmp_path)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise StorageError(f"Failed to write {path}: {exc}") from exc
    logger.debug("Wrote %d bytes to %s", len(payload), path)
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    try:
        return path.read_bytes()
    except FileNotFoundError as exc:
        raise StorageError(f"File not found: {path}") from exc
    except OSError as exc:
        raise StorageError(f"Failed to read {path}: {exc}") from exc


def sha256_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def sha256_file(path: str | Path) -> str:
    """Hex digest of a file, streamed in 1 MiB blocks."""
    digest = hashlib.sha256()
    try:
        with Path(path).open("rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                digest.update(block)
    except OSError as exc:
        raise StorageError(f"Failed to hash {path}: {exc}") from exc
    return digest.hexdigest()
