"""Per-cluster local forecasters.

Each cluster (or sampled location) gets one autoregressive model AR(p) fitted
on its training series. Forecasts are placed by applying a cluster's model to
the recent history of every member grid point.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Literal, Protocol, runtime_checkable

import numpy as np
import scipy.linalg

from gridcast.errors import ConfigError, FormatError, InsufficientHistoryError, ShapeError
from gridcast.fileio import atomic_write_text, read_bytes
from gridcast.geo.clustering import ClusterPlan, centered_series, point_series

if TYPE_CHECKING:
    from gridcast.ingest.series import FieldSeries

logger = logging.getLogger(__name__)

DEFAULT_LOOKBACK = 5
DEFAULT_HORIZON = 7

Strategy = Literal["recursive", "direct"]


@runtime_checkable
class LocalForecaster(Protocol):
    """Anything that turns recent histories into multi-step forecasts."""

    lookback: int

    def forecast(self, history: np.ndarray, steps: int) -> np.ndarray:
        """Map an ``n x T`` history (T >= lookback) to an ``n x steps`` forecast."""
        ...


@dataclass(frozen=True)
class LocalArModel:
    """AR(p) with intercept.

    ``coefficients[s, k]`` multiplies lag ``k + 1``. The recursive strategy
    has a single row applied repeatedly; the direct strategy has one row per
    horizon step. ``persistence`` marks the last-value fallback.
    """

    coefficients: np.ndarray
    intercepts: np.ndarray
    lookback: int
    horizon: int
    strategy: Strategy = "recursive"
    persistence: bool = False

    def __post_init__(self) -> None:
        coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        intercepts = np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        if coefficients.shape[1] != self.lookback:
            raise ShapeError(f"expected {self.lookback} coefficients, got {coefficients.shape[1]}")
        if intercepts.size != coefficients.shape[0]:
            raise ShapeError("one intercept per coefficient row is required")
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "intercepts", intercepts)

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "intercepts": self.intercepts.tolist(),
            "lookback": self.lookback,
            "horizon": self.horizon,
            "strategy": self.strategy,
            "persistence": self.persistence,
        }

    @classmethod
    def from_dict(cls, data: dict) -> LocalArModel:
        return cls(
            coefficients=np.asarray(data["coefficients"], dtype=float),
            intercepts=np.asarray(data["intercepts"], dtype=float),
            lookback=int(data["lookback"]),
            horizon=int(data["horizon"]),
            strategy=data.get("strategy", "recursive"),
            persistence=bool(data.get("persistence", False)),
        )

    def forecast(self, history: np.ndarray, steps: int) -> np.ndarray:
        history = np.atleast_2d(np.asarray(history, dtype=float))
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        if history.shape[1] < self.lookback:
            raise InsufficientHistoryError(
                f"history has {history.shape[1]} steps, lookback is {self.lookback}"
            )
        if self.persistence:
            return np.repeat(history[:, -1:], steps, axis=1)

        # lags[:, k] is lag k + 1
        lags = history[:, : -self.lookback - 1 : -1]
        out = np.empty((history.shape[0], steps))
        if self.strategy == "direct":
            if steps > self.coefficients.shape[0]:
                raise ConfigError(
                    f"direct model was fitted for h={self.coefficients.shape[0]} steps, "
                    f"{steps} requested; raise h or lower the horizon"
                )
            for s in range(steps):
                out[:, s] = self.intercepts[s] + lags @ self.coefficients[s]
            return out
        window = lags.copy()
        for s in range(steps):
            nxt = self.intercepts[0] + window @ self.coefficients[0]
            out[:, s] = nxt
            window = np.column_stack([nxt, window[:, :-1]])
        return out


def _lag_design(x: np.ndarray, p: int, shift: int) -> tuple[np.ndarray, np.ndarray]:
    """Lag matrix (column k = lag k + 1) and targets ``shift`` steps ahead."""
    rows = x.size - p - shift + 1
    lags = np.column_stack([x[p - 1 - k : p - 1 - k + rows] for k in range(p)])
    targets = x[p + shift - 1 : p + shift - 1 + rows]
    return lags, targets


def _ols(lags: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Least squares on centered lags; None when it cannot be solved."""
    lag_mean = lags.mean(axis=0)
    target_mean = targets.mean()
    try:
        coef, _, rank, _ = scipy.linalg.lstsq(lags - lag_mean, targets - target_mean)
    except (scipy.linalg.LinAlgError, ValueError):
        return None
    if rank < lags.shape[1]:
        logger.debug("Lag design has rank %d < %d; minimum-norm solution", rank, lags.shape[1])
    return coef, float(target_mean - lag_mean @ coef)


def _persistence(p: int, h: int, strategy: Strategy) -> LocalArModel:
    rows = h if strategy == "direct" else 1
    return LocalArModel(coefficients=np.zeros((rows, p)), intercepts=np.zeros(rows),
                        lookback=p, horizon=h, strategy=strategy, persistence=True)


def fit_local_ar(
    center_series: np.ndarray,
    p: int = DEFAULT_LOOKBACK,
    h: int = DEFAULT_HORIZON,
    strategy: Strategy = "recursive",
) -> LocalArModel:
    """Fit AR(p) by ordinary least squares on lagged values.

    A series too short to give at least two regression rows (or one whose
    regression fails) falls back to persistence and is logged. A constant
    series yields zero coefficients and an intercept equal to the constant.
    """
    x = np.asarray(center_series, dtype=float).ravel()
    if p < 1:
        raise ValueError(f"lookback must be >= 1, got {p}")
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    if strategy not in ("recursive", "direct"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if x.size <= p:
        raise InsufficientHistoryError(f"series of length {x.size} is too short for lookback {p}")

    shifts = range(1, h + 1) if strategy == "direct" else (1,)
    coefficients = []
    intercepts = []
    for shift in shifts:
        if x.size - p - shift + 1 < 2:
            logger.warning("Too few lagged rows for AR(%d) at step %d; using persistence", p, shift)
            return _persistence(p, h, strategy)
        solved = _ols(*_lag_design(x, p, shift))
        if solved is None:
            logger.warning("AR(%d) regression failed; using persistence", p)
            return _persistence(p, h, strategy)
        coefficients.append(solved[0])
        intercepts.append(solved[1])
    return LocalArModel(coefficients=np.array(coefficients), intercepts=np.array(intercepts),
                        lookback=p, horizon=h, strategy=strategy)


def fit_cluster_models(
    plan: ClusterPlan,
    series: FieldSeries | np.ndarray,
    p: int = DEFAULT_LOOKBACK,
    h: int = DEFAULT_HORIZON,
    strategy: Strategy = "recursive",
) -> list[LocalArModel]:
    """One model per cluster.

    Clustering plans train on the centered (cluster-mean) series; sampling
    plans train on the series at the sampled location.
    """
    if plan.method == "sample":
        training = point_series(series, plan)
    else:
        training = centered_series(series, plan)
    models = [fit_local_ar(row, p=p, h=h, strategy=strategy) for row in training]
    fallbacks = sum(model.persistence for model in models)
    if fallbacks:
        logger.warning("%d of %d local models fell back to persistence", fallbacks, len(models))
    return models


def local_forecast(
    plan: ClusterPlan,
    models: list[LocalForecaster],
    series: FieldSeries,
    h: int,
) -> FieldSeries:
    """Forecast ``h`` steps at every grid point with its cluster's model.

    Each point's own recent history feeds the model. The result continues
    ``series`` on the calendar and has shape M x N x h.
    """
    if len(models) != plan.k:
        raise ShapeError(f"{len(models)} models for a plan with k={plan.k}")
    values = series.values.data
    if values.shape[:2] != plan.grid_shape:
        raise ShapeError(f"series grid {values.shape[:2]} does not match plan {plan.grid_shape}")
    out = np.empty(plan.grid_shape + (h,))
    for c, model in enumerate(models):
        mask = plan.members(c)
        if mask.any():
            out[mask] = model.forecast(values[mask], h)
    return series.continuation(out)


# ----------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------

LOCAL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LocalModelSet:
    """A placement plan together with one fitted model per cluster."""

    plan: ClusterPlan
    models: tuple[LocalArModel, ...]

    def __post_init__(self) -> None:
        models = tuple(self.models)
        if len(models) != self.plan.k:
            raise ShapeError(f"{len(models)} models for a plan with k={self.plan.k}")
        object.__setattr__(self, "models", models)

    @property
    def persistence_count(self) -> int:
        return sum(model.persistence for model in self.models)

    def forecast(self, series: FieldSeries, h: int) -> FieldSeries:
        return local_forecast(self.plan, list(self.models), series, h)

    def to_dict(self) -> dict:
        return {
            "version": LOCAL_FORMAT_VERSION,
            "plan": self.plan.to_dict(),
            "models": [model.to_dict() for model in self.models],
        }

    @classmethod
    def from_dict(cls, data: dict) -> LocalModelSet:
        if data.get("version") != LOCAL_FORMAT_VERSION:
            raise FormatError(f"unsupported local model set version {data.get('version')!r}")
        try:
            models = tuple(LocalArModel.from_dict(item) for item in data["models"])
            plan = ClusterPlan.from_dict(data["plan"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed local model set: {exc}") from exc
        return cls(plan=plan, models=models)


def save_local_models(path: str | Path, model_set: LocalModelSet) -> Path:
    return atomic_write_text(path, json.dumps(model_set.to_dict(), indent=2))


def load_local_models(path: str | Path) -> LocalModelSet:
    try:
        data = json.loads(read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"local model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"local model file {path} must hold a JSON object")
    return LocalModelSet.from_dict(data)
