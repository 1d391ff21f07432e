"""Haversine k-means over grid points and per-cluster series extraction.

Grid points are enumerated row-major (longitude fastest); ``assignment`` is the
M x N array of cluster indices and serializes in the same order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from gridcast.errors import EmptyClusterError, FormatError, PartitionError, ShapeError
from gridcast.fileio import atomic_write_text, read_bytes
from gridcast.geo.distance import haversine_matrix
from gridcast.geo.grid import GeoGrid

if TYPE_CHECKING:
    from gridcast.ingest.series import FieldSeries

logger = logging.getLogger(__name__)

PLAN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClusterPlan:
    """Model locations and the grid points each one serves.

    ``method`` is ``"kmeans"`` for clustering and ``"sample"`` for the
    latitude-weighted sampling strategy. ``anchor_cells`` holds the grid
    indices of sampled locations (sampling only).
    """

    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    k: int
    seed: int | None = None
    method: str = "kmeans"
    inertia_history: tuple[float, ...] = ()
    anchor_cells: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        centroids = np.asarray(self.centroids, dtype=float).reshape(-1, 2)
        assignment = np.asarray(self.assignment, dtype=np.int64)
        if centroids.shape[0] != self.k:
            raise ShapeError(f"plan has {centroids.shape[0]} centroids for k={self.k}")
        if assignment.ndim != 2:
            raise ShapeError(f"assignment must be M x N, got shape {assignment.shape}")
        if assignment.size and (assignment.min() < 0 or assignment.max() >= self.k):
            raise ShapeError("assignment refers to a centroid outside 0..k-1")
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "inertia_history", tuple(self.inertia_history))

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.assignment.shape

    def members(self, cluster: int) -> np.ndarray:
        """Boolean M x N mask of the points assigned to ``cluster``."""
        return self.assignment == cluster

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment.ravel(), minlength=self.k)

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        data = {
            "version": PLAN_FORMAT_VERSION,
            "method": self.method,
            "k": self.k,
            "seed": self.seed,
            "shape": list(self.grid_shape),
            "centroids": self.centroids.tolist(),
            "assignment": self.assignment.ravel().tolist(),
            "inertia": self.inertia,
            "inertia_history": list(self.inertia_history),
        }
        if self.anchor_cells is not None:
            data["anchor_cells"] = np.asarray(self.anchor_cells).tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ClusterPlan:
        if data.get("version") != PLAN_FORMAT_VERSION:
            raise FormatError(f"unsupported cluster plan version {data.get('version')!r}")
        try:
            shape = tuple(data["shape"])
            anchors = data.get("anchor_cells")
            return cls(
                centroids=np.asarray(data["centroids"], dtype=float),
                assignment=np.asarray(data["assignment"], dtype=np.int64).reshape(shape),
                inertia=float(data["inertia"]),
                k=int(data["k"]),
                seed=data.get("seed"),
                method=data.get("method", "kmeans"),
                inertia_history=tuple(data.get("inertia_history", ())),
                anchor_cells=None if anchors is None else np.asarray(anchors, dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed cluster plan: {exc}") from exc


def save_plan(path: str | Path, plan: ClusterPlan) -> Path:
    return atomic_write_text(path, json.dumps(plan.to_dict(), indent=2))


def load_plan(path: str | Path) -> ClusterPlan:
    try:
        data = json.loads(read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"cluster plan {path} is not valid JSON: {exc}") from exc
    return ClusterPlan.from_dict(data)


# ----------------------------------------------------------------------
# k-means
# ----------------------------------------------------------------------


def _spherical_mean(lats: np.ndarray, lons: np.ndarray) -> tuple[float, float] | None:
    """Mean of 3-D unit vectors, reprojected to ``(lat, lon)``; None if it vanishes."""
    phi = np.radians(lats)
    lam = np.radians(lons)
    v = np.array([
        np.mean(np.cos(phi) * np.cos(lam)),
        np.mean(np.cos(phi) * np.sin(lam)),
        np.mean(np.sin(phi)),
    ])
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return None
    v /= norm
    return float(np.degrees(np.arcsin(np.clip(v[2], -1.0, 1.0)))), float(
        np.degrees(np.arctan2(v[1], v[0])))


def _seed_centroids(lats: np.ndarray, lons: np.ndarray, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with squared haversine distances."""
    count = lats.size
    chosen = [int(rng.integers(count))]
    nearest = haversine_matrix(lats, lons, lats[chosen], lons[chosen])[:, 0]
    while len(chosen) < k:
        weights = nearest**2
        total = weights.sum()
        if total <= 0.0:
            remaining = np.setdiff1d(np.arange(count), chosen)
            pick = int(remaining[0])
        else:
            pick = int(rng.choice(count, p=weights / total))
        chosen.append(pick)
        fresh = haversine_matrix(lats, lons, lats[[pick]], lons[[pick]])[:, 0]
        nearest = np.minimum(nearest, fresh)
    return np.column_stack([lats[chosen], lons[chosen]])


def cluster_haversine_kmeans(
    grid: GeoGrid,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
) -> ClusterPlan:
    """Lloyd iteration with haversine assignment.

    Centroid updates take the spherical mean of the members and are kept only
    when they do not increase the cluster's summed distance, so inertia is
    non-increasing. An empty cluster is reseeded at the point farthest from
    its assigned centroid. Ties in assignment go to the lowest centroid index.
    Stops at an assignment fixed point or after ``max_iters`` updates.
    """
    size = grid.size
    if not 1 <= k <= size:
        raise PartitionError(f"k={k} must be between 1 and the grid size {size}")
    lats, lons = grid.points()

    if k == size:
        return ClusterPlan(
            centroids=np.column_stack([lats, lons]),
            assignment=np.arange(size).reshape(grid.shape),
            inertia=0.0,
            k=k,
            seed=seed,
            inertia_history=(0.0,),
        )

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(lats, lons, k, rng)
    history: list[float] = []
    assignment: np.ndarray | None = None
    converged = False

    for iteration in range(max_iters + 1):
        dist = haversine_matrix(lats, lons, centroids[:, 0], centroids[:, 1])
        fresh = np.argmin(dist, axis=1)
        own = dist[np.arange(size), fresh]
        history.append(float(own.sum()))
        if assignment is not None and np.array_equal(fresh, assignment):
            converged = True
            break
        assignment = fresh
        if iteration == max_iters:
            break

        farthest_order = np.argsort(-own, kind="stable")
        taken: set[int] = set()
        for c in range(k):
            mask = assignment == c
            if not mask.any():
                point = next(int(p) for p in farthest_order if int(p) not in taken)
                taken.add(point)
                centroids[c] = (lats[point], lons[point])
                logger.debug("Reseeded empty cluster %d at point %d", c, point)
                continue
            candidate = _spherical_mean(lats[mask], lons[mask])
            if candidate is None:
                continue
            current_cost = own[mask].sum()
            candidate_cost = haversine_matrix(
                lats[mask], lons[mask], np.array([candidate[0]]), np.array([candidate[1]])
            ).sum()
            if candidate_cost <= current_cost:
                centroids[c] = candidate

    logger.info(
        "k-means k=%d on %d points: %d iterations, inertia %.3f km%s",
        k, size, len(history), history[-1], "" if converged else " (max_iters reached)",
    )
    return ClusterPlan(
        centroids=centroids,
        assignment=assignment.reshape(grid.shape),
        inertia=history[-1],
        k=k,
        seed=seed,
        inertia_history=tuple(history),
        info={"converged": converged},
    )


# ----------------------------------------------------------------------
# Series extraction
# ----------------------------------------------------------------------


def _values(series: FieldSeries | np.ndarray) -> np.ndarray:
    values = getattr(series, "values", series)
    return np.asarray(getattr(values, "data", values), dtype=float)


def centered_series(series: FieldSeries | np.ndarray, plan: ClusterPlan) -> np.ndarray:
    """``k x T`` array: row c is the mean over every point assigned to cluster c."""
    values = _values(series)
    if values.ndim != 3 or values.shape[:2] != plan.grid_shape:
        raise ShapeError(
            f"series of shape {values.shape} does not match plan grid {plan.grid_shape}"
        )
    out = np.empty((plan.k, values.shape[2]))
    for c in range(plan.k):
        mask = plan.members(c)
        if not mask.any():
            raise EmptyClusterError(f"cluster {c} has no member points", cluster=c)
        out[c] = values[mask].mean(axis=0)
    return out


def point_series(series: FieldSeries | np.ndarray, plan: ClusterPlan,
                 grid: GeoGrid | None = None) -> np.ndarray:
    """``k x T`` array of the series at each model location's own grid cell."""
    values = _values(series)
    if values.ndim != 3 or values.shape[:2] != plan.grid_shape:
        raise ShapeError(
            f"series of shape {values.shape} does not match plan grid {plan.grid_shape}"
        )
    if plan.anchor_cells is not None:
        cells = np.asarray(plan.anchor_cells)
    else:
        grid = grid if grid is not None else getattr(series, "grid", None)
        if grid is None:
            raise ShapeError("a grid is needed to locate centroids that are not grid cells")
        cells = np.array([grid.nearest_cell(lat, lon) for lat, lon in plan.centroids])
    return values[cells[:, 0], cells[:, 1], :]
