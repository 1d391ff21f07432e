"""Dense tensor container, matricization and vectorization.

All reshapes in gridcast use one linearization: the first index runs
fastest (column-major / Fortran order). For a tensor of shape (n1, ..., nd)
the element ``T[i1, ..., id]`` sits at position
``i1 + n1*(i2 + n2*(i3 + ...))`` of ``vectorize(T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from gridcast.errors import NonFiniteError, ShapeError

ORDER = "F"


@dataclass(frozen=True)
class DenseTensor:
    """A d-way array of scalars with extents n1...nd.

    The wrapped array is made read-only so tensors can be shared freely.
    Complex data is allowed (DMD mode tensors); measurement tensors are real.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim < 1:
            raise ShapeError("tensor order must be at least 1")
        if any(n < 1 for n in arr.shape):
            raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.complexfloating):
            arr = arr.astype(np.float64, copy=False)
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def require_finite(self) -> DenseTensor:
        """Return self, raising :class:`NonFiniteError` on NaN/inf entries."""
        if not self.is_finite():
            bad = int(np.count_nonzero(~np.isfinite(self.data)))
            raise NonFiniteError(f"tensor contains {bad} non-finite values")
        return self

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.data.ravel()))

    def __array__(self, dtype: Any = None, copy: Any = None) -> np.ndarray:
        return self.data if dtype is None else self.data.astype(dtype)


def as_tensor(value: DenseTensor | np.ndarray | Any) -> DenseTensor:
    """Coerce arrays and nested sequences to :class:`DenseTensor`."""
    if isinstance(value, DenseTensor):
        return value
    return DenseTensor(np.asarray(value))


@dataclass(frozen=True)
class SplitMatricization:
    """A tensor unfolded into rows (modes 1..k) x columns (modes k+1..d)."""

    matrix: np.ndarray
    split_index: int
    original_shape: tuple[int, ...]

    def fold(self) -> DenseTensor:
        return fold(self.matrix, self.split_index, self.original_shape)


def matricize(t: DenseTensor | np.ndarray, split: int) -> SplitMatricization:
    """Unfold ``t`` so that modes ``1..split`` index rows and the rest columns.

    ``split`` is 1-based and must satisfy ``1 <= split <= d-1``. Row and
    column multi-indices are linearized first-index-fastest.
    """
    tensor = as_tensor(t)
    d = tensor.order
    if not 1 <= split <= d - 1:
        raise ShapeError(f"split index {split} out of range 1..{d - 1} for order {d}")
    rows = math.prod(tensor.shape[:split])
    cols = math.prod(tensor.shape[split:])
    matrix = np.reshape(tensor.data, (rows, cols), order=ORDER)
    return SplitMatricization(matrix=matrix, split_index=split, original_shape=tensor.shape)


def fold(matrix: np.ndarray, split: int, shape: tuple[int, ...]) -> DenseTensor:
    """Inverse of :func:`matricize`."""
    matrix = np.asarray(matrix)
    rows = math.prod(shape[:split])
    cols = math.prod(shape[split:])
    if matrix.shape != (rows, cols):
        raise ShapeError(f"matrix {matrix.shape} cannot fold to {shape} at split {split}")
    return DenseTensor(np.reshape(matrix, shape, order=ORDER))


def vectorize(t: DenseTensor | np.ndarray) -> np.ndarray:
    """Flatten ``t`` first-index-fastest; the column of a split with no column modes."""
    tensor = as_tensor(t)
    return np.reshape(tensor.data, (tensor.size,), order=ORDER)


def unvectorize(v: np.ndarray, shape: tuple[int, ...]) -> DenseTensor:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != math.prod(shape):
        raise ShapeError(f"vector of length {v.size} cannot fold to {shape}")
    return DenseTensor(np.reshape(v, shape, order=ORDER))
