"""Tensor-train format: TT-SVD, reconstruction, orthogonalization, contraction.

A tensor train of order d holds cores ``G_l`` of shape ``(r_{l-1}, n_l, r_l)``
with ``r_0 = 1``. A closed train also has ``r_d = 1`` and represents a d-way
tensor. An *open* train (``r_d > 1``) is the leading block of a longer train;
it represents the ``(n_1...n_d) x r_d`` matrix obtained by contracting its
cores, which is how the TT-DMD factors ``M`` and ``P`` are carried.

Reshapes follow the package linearization (first index fastest), so the left
unfolding of core ``l`` is ``core.reshape(r_{l-1} * n_l, r_l, order="F")``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from gridcast.errors import RankError, ShapeError
from gridcast.tensor.dense import ORDER, DenseTensor, as_tensor

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class TensorTrain:
    """Chain of 3-way cores linked by TT-ranks."""

    cores: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        cores = tuple(np.array(c, copy=True) for c in self.cores)
        if not cores:
            raise ShapeError("a tensor train needs at least one core")
        for idx, core in enumerate(cores):
            if core.ndim != 3:
                raise ShapeError(f"core {idx} has {core.ndim} axes, expected 3")
        if cores[0].shape[0] != 1:
            raise ShapeError(f"first rank must be 1, got {cores[0].shape[0]}")
        for idx in range(len(cores) - 1):
            if cores[idx].shape[2] != cores[idx + 1].shape[0]:
                raise ShapeError(
                    f"core {idx} right rank {cores[idx].shape[2]} does not match "
                    f"core {idx + 1} left rank {cores[idx + 1].shape[0]}"
                )
        for core in cores:
            core.setflags(write=False)
        object.__setattr__(self, "cores", cores)

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def mode_shape(self) -> tuple[int, ...]:
        return tuple(core.shape[1] for core in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """TT-ranks ``(r_0, r_1, ..., r_d)``."""
        return (1,) + tuple(core.shape[2] for core in self.cores)

    @property
    def is_closed(self) -> bool:
        return self.ranks[-1] == 1

    def head(self, count: int) -> TensorTrain:
        """Open train made of the first ``count`` cores."""
        if not 1 <= count <= self.order:
            raise ShapeError(f"cannot take {count} cores of an order-{self.order} train")
        return TensorTrain(self.cores[:count])

    def left_unfolding(self, index: int) -> np.ndarray:
        core = self.cores[index]
        r, n, r_next = core.shape
        return np.reshape(core, (r * n, r_next), order=ORDER)

    def is_left_orthogonal(self, atol: float = 1e-10) -> bool:
        """True when the first d-1 cores have orthonormal left unfoldings."""
        for idx in range(self.order - 1):
            unf = self.left_unfolding(idx)
            gram = unf.conj().T @ unf
            if not np.allclose(gram, np.eye(gram.shape[0]), atol=atol, rtol=0.0):
                return False
        return True

    def parameter_count(self) -> int:
        return sum(core.size for core in self.cores)


def _expand_caps(rank_cap: int | Sequence[int] | None, count: int) -> list[float]:
    if rank_cap is None:
        return [math.inf] * count
    if isinstance(rank_cap, (int, np.integer)):
        caps: list[float] = [int(rank_cap)] * count
    else:
        caps = [int(c) for c in rank_cap]
        if len(caps) != count:
            raise RankError(f"expected {count} rank caps, got {len(caps)}")
    if any(c < 1 for c in caps):
        raise RankError(f"rank caps must be >= 1, got {caps}")
    return caps


def _truncation_rank(s: np.ndarray, delta: float, cap: float) -> int:
    """Smallest rank whose discarded tail has norm <= delta, limited by cap."""
    if s.size == 0 or s[0] == 0.0:
        return 1
    # tail[k] = norm of s[k:]
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
    tail = np.append(tail, 0.0)
    keep = int(np.argmax(tail <= delta))
    keep = max(keep, 1)
    return int(min(keep, cap, s.size))


def tt_decompose(
    t: DenseTensor | np.ndarray,
    rank_cap: int | Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
) -> TensorTrain:
    """TT-SVD: left-to-right sequence of truncated SVDs.

    Each of the d-1 unfoldings discards singular values whose tail norm stays
    below ``tol * ||T||_F / sqrt(d-1)``, so without binding rank caps the
    reconstruction error is at most ``tol * ||T||_F``. ``rank_cap`` is either
    one cap for every interior rank or a sequence of d-1 caps.

    The returned cores 1..d-1 are left-orthogonal; the last core carries the
    norm.
    """
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    tensor = as_tensor(t).require_finite()
    shape = tensor.shape
    d = len(shape)
    if d == 1:
        return TensorTrain((np.reshape(tensor.data, (1, shape[0], 1), order=ORDER),))

    caps = _expand_caps(rank_cap, d - 1)
    delta = tol * tensor.frobenius_norm() / math.sqrt(d - 1)

    cores: list[np.ndarray] = []
    carry = np.array(tensor.data, copy=True)
    r_prev = 1
    for mode in range(d - 1):
        unfolding = np.reshape(carry, (r_prev * shape[mode], -1), order=ORDER)
        u, s, vh = scipy.linalg.svd(unfolding, full_matrices=False, lapack_driver="gesdd")
        rank = _truncation_rank(s, delta, caps[mode])
        cores.append(np.reshape(u[:, :rank], (r_prev, shape[mode], rank), order=ORDER))
        carry = s[:rank, None] * vh[:rank, :]
        r_prev = rank
    cores.append(np.reshape(carry, (r_prev, shape[-1], 1), order=ORDER))

    train = TensorTrain(tuple(cores))
    logger.debug("TT-SVD of shape %s -> ranks %s", shape, train.ranks)
    return train


def tt_to_matrix(tt: TensorTrain) -> np.ndarray:
    """Contract all cores into the ``(n_1...n_d) x r_d`` matrix they represent."""
    first = tt.cores[0]
    result = np.reshape(first, (first.shape[1], first.shape[2]), order=ORDER)
    for core in tt.cores[1:]:
        r, n, r_next = core.shape
        result = result @ np.reshape(core, (r, n * r_next), order=ORDER)
        result = np.reshape(result, (-1, r_next), order=ORDER)
    return result


def tt_reconstruct(tt: TensorTrain) -> DenseTensor:
    """Full tensor represented by ``tt``.

    For an open train the result has one extra trailing mode of extent r_d.
    """
    matrix = tt_to_matrix(tt)
    r_last = tt.ranks[-1]
    shape = tt.mode_shape + ((r_last,) if r_last != 1 else ())
    return DenseTensor(np.reshape(matrix, shape, order=ORDER))


def left_orthogonalize(tt: TensorTrain) -> TensorTrain:
    """QR sweep making cores 1..d-1 left-orthogonal without changing the tensor."""
    cores = [np.array(c, copy=True) for c in tt.cores]
    for idx in range(len(cores) - 1):
        r, n, r_next = cores[idx].shape
        q, rr = scipy.linalg.qr(
            np.reshape(cores[idx], (r * n, r_next), order=ORDER), mode="economic"
        )
        cores[idx] = np.reshape(q, (r, n, q.shape[1]), order=ORDER)
        cores[idx + 1] = np.tensordot(rr, cores[idx + 1], axes=(1, 0))
    return TensorTrain(tuple(cores))


def tt_contract_pair(x: TensorTrain, y: TensorTrain) -> np.ndarray:
    """``M^T P`` for the matrices represented by two trains over the same modes.

    Sweeps the cores left to right carrying an ``r_l x s_l`` interface matrix,
    so the full ``prod(n_l)``-length columns are never formed.
    """
    if x.mode_shape != y.mode_shape:
        raise ShapeError(f"mode extents differ: {x.mode_shape} vs {y.mode_shape}")
    interface = np.ones((1, 1), dtype=np.result_type(x.cores[0], y.cores[0]))
    for a, b in zip(x.cores, y.cores):
        partial = np.tensordot(interface, a, axes=(0, 0))  # (s, n, r')
        interface = np.tensordot(partial, b, axes=([0, 1], [0, 1]))  # (r', s')
    return interface
