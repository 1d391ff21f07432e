"""Bundled synthetic field series.

``linear_fixture`` draws noiseless fields driven by a random stable linear
system of known spectrum. ``weather_fixture`` imitates a daily temperature
field: a climatological mean, a yearly cycle whose phase varies across the
grid, two slowly decaying radial waves travelling in opposite directions and
seeded observation noise.
"""

from __future__ import annotations

import datetime as dt
import logging

import numpy as np

from gridcast.errors import ConfigError
from gridcast.geo.grid import GeoGrid
from gridcast.ingest.series import FieldSeries, daily_dates
from gridcast.tensor.dense import DenseTensor

logger = logging.getLogger(__name__)

FIXTURE_START = dt.date(2015, 10, 30)
WEATHER_SHAPE = (18, 24)
WEATHER_STEPS = 1100
# constant mean + yearly pair + two wave pairs
WEATHER_MODES = 7
YEAR_DAYS = 365.0


def _grid(shape: tuple[int, int], resolution: float = 0.5) -> GeoGrid:
    m, n = shape
    return GeoGrid.from_bbox(40.0, 40.0 + (m - 1) * resolution,
                             10.0, 10.0 + (n - 1) * resolution, resolution)


def stable_spectrum(rng: np.random.Generator, rank: int) -> np.ndarray:
    """Closed-under-conjugation eigenvalues with moduli in [0.8, 0.99]."""
    pairs, single = divmod(rank, 2)
    moduli = rng.uniform(0.8, 0.99, size=pairs)
    angles = rng.uniform(0.05, 0.6, size=pairs)
    upper = moduli * np.exp(1j * angles)
    values = np.concatenate([upper, upper.conj()])
    if single:
        values = np.append(values, rng.uniform(0.8, 0.99))
    return values


def linear_fixture(
    shape: tuple[int, int] = (4, 5),
    steps: int = 40,
    rank: int = 4,
    seed: int = 0,
    start: dt.date = FIXTURE_START,
) -> FieldSeries:
    """Noiseless ``x_t = Re(sum_k phi_k b_k lambda_k^t)`` with ``rank`` stable modes."""
    m, n = shape
    if not 1 <= rank <= min(m * n, steps - 1):
        raise ValueError(f"rank {rank} must be in 1..{min(m * n, steps - 1)}")
    rng = np.random.default_rng(seed)
    eigenvalues = stable_spectrum(rng, rank)
    pairs = rank // 2
    modes = rng.standard_normal((m * n, pairs)) + 1j * rng.standard_normal((m * n, pairs))
    powers = eigenvalues[:pairs, None] ** np.arange(steps)[None, :]
    # each conjugate pair contributes 2 Re(phi lambda^t)
    flat = 2.0 * np.real(modes @ powers)
    if rank % 2:
        flat += np.outer(rng.standard_normal(m * n), eigenvalues[-1].real ** np.arange(steps))
    values = flat.reshape(m, n, steps, order="F")
    return FieldSeries(
        grid=_grid(shape),
        dates=daily_dates(start, steps),
        values=DenseTensor(values),
        variable="LINEAR",
    )


def weather_fixture(
    shape: tuple[int, int] = WEATHER_SHAPE,
    steps: int = WEATHER_STEPS,
    seed: int = 0,
    noise: float = 0.05,
    start: dt.date = FIXTURE_START,
) -> FieldSeries:
    """Temperature-like daily field; without noise it has exactly seven DMD modes."""
    m, n = shape
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, m), np.linspace(0.0, 1.0, n), indexing="ij")
    t = np.arange(steps, dtype=float)[None, None, :]

    mean = 20.0 + 5.0 * (0.6 * (1.0 - yy) + 0.4 * xx)
    amplitude = 6.0 + 4.0 * yy
    phase = 0.8 * np.hypot(yy - 0.3, xx - 0.7)
    season = amplitude[..., None] * np.cos(2.0 * np.pi * t / YEAR_DAYS - phase[..., None])

    r1 = np.hypot(yy - 0.25, xx - 0.25)[..., None]
    r2 = np.hypot(yy - 0.75, xx - 0.8)[..., None]
    outward = 2.0 * np.exp(-0.001 * t) * np.cos(12.0 * r1 - 0.35 * t)
    inward = 1.5 * np.exp(-0.0015 * t) * np.cos(9.0 * r2 + 0.22 * t)

    values = mean[..., None] + season + outward + inward
    if noise > 0:
        values = values + rng.normal(0.0, noise, size=values.shape)
    logger.debug("Generated weather fixture %s x %d (seed %d)", shape, steps, seed)
    return FieldSeries(
        grid=_grid(shape),
        dates=daily_dates(start, steps),
        values=DenseTensor(values),
        variable="TMAX",
    )


def synthetic_series(name: str, seed: int = 0) -> FieldSeries:
    """Named generator for the ``synthetic`` dataset source."""
    if name == "weather":
        return weather_fixture(seed=seed)
    if name == "linear":
        return linear_fixture(shape=(8, 10), steps=120, rank=6, seed=seed)
    raise ConfigError(f"unknown synthetic dataset {name!r}; expected 'weather' or 'linear'")
