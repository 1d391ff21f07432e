"""Exception hierarchy for gridcast.

Every error raised on purpose by the package derives from :class:`GridcastError`.
The four families carry the process exit code used by the command line.
"""

from __future__ import annotations

import datetime as dt
from collections.abc import Sequence


class GridcastError(Exception):
    """Base class for all gridcast errors."""

    exit_code: int = 1


class ConfigError(GridcastError):
    """Invalid or missing configuration."""

    exit_code = 2


class DataError(GridcastError):
    """Input data is malformed, incomplete or inconsistent."""

    exit_code = 3


class NumericalError(GridcastError):
    """A numerical routine cannot produce a meaningful result."""

    exit_code = 4


class StorageError(GridcastError):
    """Reading or writing an artifact failed."""

    exit_code = 5


# ----------------------------------------------------------------------
# Numerical
# ----------------------------------------------------------------------


class ShapeError(NumericalError, ValueError):
    """Array extents do not match what an operation requires."""


class NonFiniteError(NumericalError, ValueError):
    """Input contains NaN or infinite values."""


class RankError(NumericalError, ValueError):
    """Requested rank is outside the admissible range."""

    def __init__(self, message: str, requested: int | None = None, bound: int | None = None):
        super().__init__(message)
        self.requested = requested
        self.bound = bound


class SingularGramError(NumericalError):
    """A Gram matrix in an alternating least squares update is singular."""

    def __init__(self, message: str, iteration: int, block: str):
        super().__init__(message)
        self.iteration = iteration
        self.block = block


class EmptyClusterError(NumericalError):
    """A cluster has no member grid points."""

    def __init__(self, message: str, cluster: int):
        super().__init__(message)
        self.cluster = cluster


# ----------------------------------------------------------------------
# Data
# ----------------------------------------------------------------------


class InsufficientHistoryError(DataError, ValueError):
    """A series is too short for the requested lookback."""


class PartitionError(DataError, ValueError):
    """More models or clusters requested than the grid has points."""


class DateGapError(DataError):
    """Calendar stamps are not strictly consecutive days."""

    def __init__(self, message: str, missing: Sequence[dt.date] = ()):
        super().__init__(message)
        self.missing = list(missing)


class RaggedGridError(DataError):
    """Grid points do not form a full latitude x longitude x date product."""


class IrregularGridError(DataError):
    """Latitude or longitude spacing is not uniform."""

    def __init__(self, message: str, axis: str):
        super().__init__(message)
        self.axis = axis


class DuplicateKeyError(DataError):
    """The same (lat, lon, date) key appears more than once."""

    def __init__(self, message: str, row: int):
        super().__init__(message)
        self.row = row


class MissingValueError(DataError):
    """A measurement is missing (NaN or service fill value)."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class SplitError(DataError, ValueError):
    """A train/test split specification is inconsistent with the data."""


class PowerApiError(DataError):
    """The POWER service failed after all retries."""

    def __init__(self, message: str, status: int | None = None, url: str = ""):
        super().__init__(message)
        self.status = status
        self.url = url


class PowerSchemaError(DataError):
    """A POWER response does not have the expected structure."""


# ----------------------------------------------------------------------
# Storage
# ----------------------------------------------------------------------


class FormatError(StorageError):
    """A binary or JSON artifact is corrupt or of an unknown version."""
