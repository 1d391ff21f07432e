"""Exact dynamic mode decomposition on snapshot matrices.

The reduced operator is ``A~ = U* Y V S^-1`` from the truncated SVD
``X = U S V*``; modes are the exact-DMD modes ``(1/lambda) Y V S^-1 w``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from gridcast.errors import NumericalError, RankError, ShapeError
from gridcast.models.forecast import Forecast, split_real
from gridcast.tensor.dense import DenseTensor

logger = logging.getLogger(__name__)

# Singular values below SVD_FLOOR * sigma_max are treated as zero.
SVD_FLOOR = 1e-12
# Eigenvalues with |lambda| below this are dropped (no log, no 1/lambda).
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class SnapshotPair:
    """Shifted snapshot matrices: ``y[:, j]`` is the successor of ``x[:, j]``."""

    x: np.ndarray
    y: np.ndarray
    dt: float = 1.0

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or x.shape != y.shape:
            raise ShapeError(
                f"snapshot matrices must share a 2-D shape, got {x.shape} and {y.shape}"
            )
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def state_size(self) -> int:
        return self.x.shape[0]

    @property
    def pair_count(self) -> int:
        return self.x.shape[1]


def build_snapshot_pair(series: np.ndarray, dt: float = 1.0) -> SnapshotPair:
    """Split an ``n x m`` snapshot sequence into ``X = z_0..z_{m-2}``, ``Y = z_1..z_{m-1}``."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ShapeError(f"snapshot series must be 2-D, got shape {series.shape}")
    if series.shape[1] < 2:
        raise ShapeError(f"need at least 2 snapshots, got {series.shape[1]}")
    return SnapshotPair(x=series[:, :-1], y=series[:, 1:], dt=dt)


def spectral_order(eigenvalues: np.ndarray) -> np.ndarray:
    """Indices sorting by descending magnitude, then real part, then imaginary part."""
    magnitude = np.round(np.abs(eigenvalues), 12)
    return np.lexsort((-eigenvalues.imag, -eigenvalues.real, -magnitude))


@dataclass(frozen=True)
class DmdModel:
    """Fitted DMD: modes as columns, eigenvalues in spectral order."""

    modes: np.ndarray
    eigenvalues: np.ndarray
    dt: float = 1.0
    requested_rank: int = 0
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def state_size(self) -> int:
        return self.modes.shape[0]

    @property
    def omega(self) -> np.ndarray:
        """Continuous-time exponents ``log(lambda) / dt`` (principal branch)."""
        return np.log(self.eigenvalues.astype(complex)) / self.dt

    @property
    def frequencies(self) -> np.ndarray:
        """Oscillation frequencies in cycles per time unit."""
        return self.omega.imag / (2 * np.pi)

    @property
    def growth_rates(self) -> np.ndarray:
        return self.omega.real


def dmd_fit(pair: SnapshotPair, rank: int) -> DmdModel:
    """Exact DMD of rank ``rank``.

    Singular values below ``1e-12 * sigma_max`` are dropped even when that
    leaves fewer than ``rank`` directions; the achieved rank is logged and
    recorded on the model (``model.rank`` vs ``model.requested_rank``).
    """
    bound = min(pair.state_size, pair.pair_count)
    if not 1 <= rank <= bound:
        raise RankError(
            f"rank {rank} outside 1..{bound} for {pair.state_size} states x "
            f"{pair.pair_count} snapshot pairs",
            requested=rank,
            bound=bound,
        )

    u, s, vh = scipy.linalg.svd(pair.x, full_matrices=False)
    if s[0] == 0.0:
        raise NumericalError("snapshot matrix X is identically zero")
    usable = int(np.count_nonzero(s > SVD_FLOOR * s[0]))
    achieved = min(rank, usable)
    if achieved < rank:
        logger.warning("X is numerically rank %d; fitting rank %d instead of %d",
                       usable, achieved, rank)

    u_r = u[:, :achieved]
    s_r = s[:achieved]
    v_r = vh[:achieved].conj().T
    y_v_sinv = (pair.y @ v_r) / s_r
    reduced = u_r.conj().T @ y_v_sinv

    try:
        eigenvalues, vectors = scipy.linalg.eig(reduced)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition of reduced operator failed: {exc}") from exc

    keep = np.abs(eigenvalues) > EIG_FLOOR
    if not keep.all():
        logger.info("Dropping %d zero eigenvalues", int(np.count_nonzero(~keep)))
    eigenvalues = eigenvalues[keep]
    vectors = vectors[:, keep]

    modes = (y_v_sinv @ vectors) / eigenvalues
    order = spectral_order(eigenvalues)
    return DmdModel(
        modes=modes[:, order],
        eigenvalues=eigenvalues[order],
        dt=pair.dt,
        requested_rank=rank,
        singular_values=s_r,
    )


def _amplitudes(modes: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Least-squares mode amplitudes ``Phi^+ z`` (Moore-Penrose)."""
    solution, *_ = scipy.linalg.lstsq(modes, states.astype(complex))
    return solution


def dmd_forecast(model: DmdModel, z0: np.ndarray, steps: int) -> Forecast:
    """Columns ``t = 1..steps`` of ``Re(Phi Lambda^t Phi^+ z0)``."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if model.rank == 0:
        raise NumericalError("model has no modes to forecast with")
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.size != model.state_size:
        raise ShapeError(f"initial state has {z0.size} entries, model expects {model.state_size}")

    amplitudes = _amplitudes(model.modes, z0)
    powers = model.eigenvalues[:, None] ** np.arange(1, steps + 1)[None, :]
    values, residual = split_real(model.modes @ (amplitudes[:, None] * powers))
    if residual > 1e-6:
        logger.warning("Forecast imaginary residual %.3e is large", residual)
    return Forecast(values=DenseTensor(values), imag_residual=residual)


def dmd_predict_next(model: DmdModel, states: np.ndarray) -> np.ndarray:
    """Apply the fitted operator once to each column of ``states``."""
    states = np.asarray(states, dtype=float)
    single = states.ndim == 1
    if single:
        states = states[:, None]
    if states.shape[0] != model.state_size:
        raise ShapeError(f"states have {states.shape[0]} rows, model expects {model.state_size}")
    amplitudes = _amplitudes(model.modes, states)
    successors = np.real(model.modes @ (model.eigenvalues[:, None] * amplitudes))
    return successors[:, 0] if single else successors
