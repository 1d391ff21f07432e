"""Forecast result shared by the spectral models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridcast.tensor.dense import DenseTensor


@dataclass(frozen=True)
class Forecast:
    """Real forecast plus the relative size of the discarded imaginary part.

    ``values`` has the forecast steps along its last mode.
    """

    values: DenseTensor
    imag_residual: float

    @property
    def steps(self) -> int:
        return self.values.shape[-1]

    def step(self, t: int) -> np.ndarray:
        """Forecast slice for step ``t`` (1-based)."""
        return self.values.data[..., t - 1]


def split_real(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Real part of ``values`` and ``||imag|| / ||real||`` (0 when both vanish)."""
    real = np.real(values)
    imag_norm = float(np.linalg.norm(np.imag(values)))
    real_norm = float(np.linalg.norm(real))
    if imag_norm == 0.0:
        return real, 0.0
    return real, imag_norm / real_norm if real_norm > 0 else float("inf")
