"""Tensor-train DMD: fit on tensorized snapshot histories and forecast fields.

Fitting never forms the ``prod(n) x prod(n)`` operator. The snapshot tensors
``X`` and ``Y`` (spatial modes first, time last) are TT-decomposed:

* ``X = M S N`` where ``M`` is the left-orthogonal leading train, ``S`` the
  singular values of the last interface and ``N`` has orthonormal rows;
* ``Y = P Q`` where ``P`` is the leading train of ``Y`` and ``Q`` its last core.

The reduced operator is ``A~ = (M^T P)(Q N^T S^-1)`` with ``M^T P`` computed by
a core-by-core contraction. Modes ``phi_j = (1/lambda_j) P Q N^T S^-1 w_j`` are
assembled as a tensor by attaching ``Q N^T S^-1 W Lambda^-1`` to the last
spatial core of ``P``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.linalg

from gridcast.errors import NumericalError, RankError, ShapeError
from gridcast.models.dmd import EIG_FLOOR, SVD_FLOOR, spectral_order
from gridcast.models.forecast import Forecast, split_real
from gridcast.tensor.dense import ORDER, DenseTensor, as_tensor, vectorize
from gridcast.tensor.train import (
    DEFAULT_TOL,
    TensorTrain,
    left_orthogonalize,
    tt_contract_pair,
    tt_decompose,
    tt_to_matrix,
)

if TYPE_CHECKING:
    from gridcast.ingest.series import FieldSeries

logger = logging.getLogger(__name__)

DEFAULT_ENERGY = 0.9999

Anchor = Literal["last", "first"]


@dataclass(frozen=True)
class TtSnapshotTensors:
    """Shifted snapshot tensors with time as the last mode."""

    x: DenseTensor
    y: DenseTensor
    dt: float = 1.0

    def __post_init__(self) -> None:
        x = as_tensor(self.x)
        y = as_tensor(self.y)
        if x.shape != y.shape:
            raise ShapeError(f"snapshot tensors differ in shape: {x.shape} vs {y.shape}")
        if x.order < 2:
            raise ShapeError("snapshot tensors need at least one spatial mode and a time mode")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.x.shape[:-1]

    @property
    def snapshot_count(self) -> int:
        return self.x.shape[-1]


def build_tt_snapshot_tensors(
    series: FieldSeries | DenseTensor | np.ndarray, dt: float = 1.0
) -> TtSnapshotTensors:
    """``x`` holds slices ``0..T-2`` and ``y`` slices ``1..T-1`` of the series."""
    values = getattr(series, "values", series)
    tensor = as_tensor(values)
    if tensor.order < 2 or tensor.shape[-1] < 2:
        raise ShapeError(f"need at least 2 time slices, got shape {tensor.shape}")
    data = tensor.data
    return TtSnapshotTensors(x=DenseTensor(data[..., :-1]), y=DenseTensor(data[..., 1:]), dt=dt)


@dataclass(frozen=True)
class TtDmdModel:
    """Fitted TT-DMD model.

    ``mode_tensor`` has shape ``spatial + (p,)``; slice ``[..., j]`` is mode j.
    ``y_leading`` (P), ``time_factor`` (``Q N^T S^-1``) and ``eigenvectors``
    (W) are the factors the modes are assembled from.
    """

    mode_tensor: DenseTensor
    eigenvalues: np.ndarray
    dt: float
    requested_rank: int | None
    singular_values: np.ndarray
    reduced_operator: np.ndarray
    cross_gram: np.ndarray
    time_factor: np.ndarray
    eigenvectors: np.ndarray
    y_leading: TensorTrain | None = None
    anchor_first: np.ndarray | None = None
    anchor_last: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def effective_rank(self) -> int:
        """Retained final TT rank r_d of the X decomposition."""
        return int(self.singular_values.size)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return self.mode_tensor.shape[:-1]

    @property
    def omega(self) -> np.ndarray:
        """Continuous-time exponents ``log(lambda) / dt`` (principal branch)."""
        return np.log(self.eigenvalues.astype(complex)) / self.dt

    def vectorized_modes(self) -> np.ndarray:
        """Modes as columns of a ``prod(spatial) x p`` matrix."""
        size = int(np.prod(self.spatial_shape))
        return np.reshape(self.mode_tensor.data, (size, self.rank), order=ORDER)


def _energy_rank(sigma: np.ndarray, energy: float) -> int:
    cumulative = np.cumsum(sigma**2) / np.sum(sigma**2)
    return int(np.searchsorted(cumulative, energy - 1e-15) + 1)


def ttdmd_fit(
    tensors: TtSnapshotTensors,
    rank: int | None = None,
    tol: float = DEFAULT_TOL,
    energy: float = DEFAULT_ENERGY,
) -> TtDmdModel:
    """Fit TT-DMD.

    ``rank`` caps every TT rank of both decompositions (the final rank r_d
    that enters ``S`` included). Without a rank the final rank keeps
    ``energy`` of the singular-value energy.
    """
    if rank is not None and rank < 1:
        raise RankError(f"rank must be >= 1, got {rank}", requested=rank)
    spatial = tensors.spatial_shape
    order = len(spatial)

    # X = M S N
    x_train = left_orthogonalize(tt_decompose(tensors.x, rank_cap=rank, tol=tol))
    last = x_train.cores[-1]
    u_s, sigma, n_rows = scipy.linalg.svd(last[:, :, 0], full_matrices=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        raise NumericalError("snapshot tensor X is identically zero")
    kept = int(np.count_nonzero(sigma > SVD_FLOOR * sigma[0]))
    if rank is None:
        kept = min(kept, _energy_rank(sigma, energy))
    if kept < sigma.size:
        logger.info("Truncating final TT rank from %d to %d", sigma.size, kept)
    sigma = sigma[:kept]
    n_rows = n_rows[:kept]
    lead = x_train.cores[order - 1]
    m_cores = x_train.cores[: order - 1] + (np.tensordot(lead, u_s[:, :kept], axes=(2, 0)),)
    m_train = TensorTrain(m_cores)

    # Y = P Q
    y_train = tt_decompose(tensors.y, rank_cap=rank, tol=tol)
    p_train = y_train.head(order)
    q = y_train.cores[-1][:, :, 0]

    cross_gram = tt_contract_pair(m_train, p_train)
    time_factor = (q @ n_rows.conj().T) / sigma
    reduced = cross_gram @ time_factor

    try:
        eigenvalues, vectors = scipy.linalg.eig(reduced)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition of reduced operator failed: {exc}") from exc
    keep = np.abs(eigenvalues) > EIG_FLOOR
    if not keep.all():
        logger.info("Dropping %d eigenvalues below %.0e", int(np.count_nonzero(~keep)), EIG_FLOOR)
    eigenvalues = eigenvalues[keep]
    vectors = vectors[:, keep]
    if eigenvalues.size == 0:
        raise NumericalError("every eigenvalue of the reduced operator is zero")
    ordering = spectral_order(eigenvalues)
    eigenvalues = eigenvalues[ordering]
    vectors = vectors[:, ordering]

    coefficients = (time_factor @ vectors) / eigenvalues
    p_lead = p_train.cores[-1]
    mode_cores = p_train.cores[:-1] + (np.tensordot(p_lead, coefficients, axes=(2, 0)),)
    mode_matrix = tt_to_matrix(TensorTrain(mode_cores))
    mode_tensor = DenseTensor(
        np.reshape(mode_matrix, spatial + (eigenvalues.size,), order=ORDER)
    )

    logger.info(
        "TT-DMD fit: spatial %s, %d snapshots, X ranks %s, %d modes",
        spatial, tensors.snapshot_count, x_train.ranks, eigenvalues.size,
    )
    return TtDmdModel(
        mode_tensor=mode_tensor,
        eigenvalues=eigenvalues,
        dt=tensors.dt,
        requested_rank=rank,
        singular_values=sigma,
        reduced_operator=reduced,
        cross_gram=cross_gram,
        time_factor=time_factor,
        eigenvectors=vectors,
        y_leading=p_train,
        anchor_first=np.array(tensors.x.data[..., 0]),
        anchor_last=np.array(tensors.y.data[..., -1]),
    )


def ttdmd_forecast(
    model: TtDmdModel,
    x0: np.ndarray | None = None,
    steps: int = 1,
    anchor: Anchor = "last",
) -> Forecast:
    """Forecast ``steps`` fields after ``x0``.

    Amplitudes solve ``Phi_vec b ~= vec(x0)`` in the least-squares sense and
    slice t is ``Re(sum_j Phi[..., j] b_j exp(omega_j t dt))``. Without ``x0``
    the stored anchor is used: the last training snapshot continues the
    series, the first one reconstructs the training run.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if len(model.spatial_shape) != 2:
        raise ShapeError(f"forecasting needs 2-D fields, model has {model.spatial_shape}")
    if x0 is None:
        x0 = model.anchor_last if anchor == "last" else model.anchor_first
        if x0 is None:
            raise ValueError(f"model carries no {anchor!r} anchor; pass x0 explicitly")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != model.spatial_shape:
        raise ShapeError(f"x0 has shape {x0.shape}, model expects {model.spatial_shape}")

    phi = model.vectorized_modes()
    amplitudes, *_ = scipy.linalg.lstsq(phi, vectorize(x0).astype(complex))
    times = np.arange(1, steps + 1) * model.dt
    dynamics = np.exp(model.omega[:, None] * times[None, :])
    flat, residual = split_real(phi @ (amplitudes[:, None] * dynamics))
    if residual > 1e-6:
        logger.warning("Forecast imaginary residual %.3e is large", residual)
    values = np.reshape(flat, model.spatial_shape + (steps,), order=ORDER)
    return Forecast(values=DenseTensor(values), imag_residual=residual)
