"""Great-circle distances."""

from __future__ import annotations

import numpy as np

EARTH_RADIUS_KM = 6367.0


def haversine(p: tuple[float, float], q: tuple[float, float],
              radius: float = EARTH_RADIUS_KM) -> float:
    """Haversine distance in km between ``(lat, lon)`` pairs given in degrees."""
    return float(haversine_matrix(np.array([p[0]]), np.array([p[1]]),
                                  np.array([q[0]]), np.array([q[1]]), radius)[0, 0])


def haversine_matrix(
    lat1: np.ndarray,
    lon1: np.ndarray,
    lat2: np.ndarray,
    lon2: np.ndarray,
    radius: float = EARTH_RADIUS_KM,
) -> np.ndarray:
    """Pairwise distances: entry ``[i, j]`` is between point i of set 1 and point j of set 2."""
    phi1 = np.radians(np.asarray(lat1, dtype=float))[:, None]
    phi2 = np.radians(np.asarray(lat2, dtype=float))[None, :]
    dlam = np.radians(np.asarray(lon2, dtype=float))[None, :] - np.radians(
        np.asarray(lon1, dtype=float))[:, None]
    h = np.sin((phi2 - phi1) / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
