"""Point-error metrics, frame-wise image metrics and the metrics report.

Conventions
-----------
* SMAPE is ``100/n * sum |p - o| / ((|o| + |p|) / 2)``; a term with
  ``|o| + |p| = 0`` counts as 0.
* NRMSE of a frame divides its RMSE by the target frame's range (default),
  absolute mean or standard deviation; a zero normalizer gives null.
* PSNR uses the dynamic range of the whole target tensor as peak; an exact
  frame gives ``+inf`` (serialized as null).
* SSIM uses scikit-image's Gaussian-free uniform-window formulation with
  ``K1 = 0.01, K2 = 0.03``, window ``min(7, largest odd <= min frame side)``
  and the global target range as data range (1.0 for a flat target). Frames
  smaller than 3 x 3 give null.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from skimage.metrics import structural_similarity

from gridcast.errors import ShapeError
from gridcast.fileio import atomic_write_text
from gridcast.tensor.dense import DenseTensor

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
DEFAULT_SSIM_WINDOW = 7
FRAME_METRICS = ("mse", "nrmse", "psnr", "ssim")


def _pair(
    obs: np.ndarray | DenseTensor, pred: np.ndarray | DenseTensor
) -> tuple[np.ndarray, np.ndarray]:
    o = np.asarray(getattr(obs, "data", obs), dtype=float)
    p = np.asarray(getattr(pred, "data", pred), dtype=float)
    if o.shape != p.shape:
        raise ShapeError(f"observed shape {o.shape} differs from predicted {p.shape}")
    if o.size == 0:
        raise ShapeError("metrics need at least one value")
    return o.ravel(), p.ravel()


def rmse(obs: np.ndarray, pred: np.ndarray) -> float:
    o, p = _pair(obs, pred)
    return float(np.sqrt(np.mean((o - p) ** 2)))


def mae(obs: np.ndarray, pred: np.ndarray) -> float:
    o, p = _pair(obs, pred)
    return float(np.mean(np.abs(o - p)))


def smape(obs: np.ndarray, pred: np.ndarray) -> float:
    """Symmetric MAPE in percent, within ``[0, 200]``."""
    o, p = _pair(obs, pred)
    denom = (np.abs(o) + np.abs(p)) / 2.0
    diff = np.abs(p - o)
    terms = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(100.0 * np.mean(terms))


# ----------------------------------------------------------------------
# Frame-wise metrics
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FramewiseMetrics:
    """Per-step arrays; NaN marks a null value, ``inf`` an exact PSNR."""

    mse: np.ndarray
    nrmse: np.ndarray
    psnr: np.ndarray
    ssim: np.ndarray

    @property
    def steps(self) -> int:
        return int(self.mse.size)

    def means(self) -> dict[str, float | None]:
        """Mean of each array over its finite entries (None if there are none)."""
        out: dict[str, float | None] = {}
        for name in FRAME_METRICS:
            values = getattr(self, name)
            finite = values[np.isfinite(values)]
            out[name] = float(finite.mean()) if finite.size else None
        return out


def ssim_window(frame_shape: tuple[int, int], preferred: int = DEFAULT_SSIM_WINDOW) -> int | None:
    """Odd window not larger than ``preferred`` or the smaller frame side; None below 3."""
    side = min(min(frame_shape), preferred)
    window = side if side % 2 == 1 else side - 1
    return window if window >= 3 else None


def _normalizer(frame: np.ndarray, norm: str) -> float:
    if norm == "range":
        return float(frame.max() - frame.min())
    if norm == "mean":
        return float(abs(frame.mean()))
    if norm == "std":
        return float(frame.std())
    raise ValueError(f"unknown NRMSE normalization {norm!r}")


def framewise(
    pred: np.ndarray | DenseTensor,
    target: np.ndarray | DenseTensor,
    nrmse_norm: str = "range",
    window: int = DEFAULT_SSIM_WINDOW,
) -> FramewiseMetrics:
    """MSE, NRMSE, PSNR and SSIM of every ``[:, :, t]`` slice."""
    p = np.asarray(getattr(pred, "data", pred), dtype=float)
    y = np.asarray(getattr(target, "data", target), dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {p.shape} differs from target {y.shape}")
    if y.ndim != 3:
        raise ShapeError(f"frame-wise metrics need M x N x k tensors, got {y.shape}")

    steps = y.shape[2]
    peak = float(y.max() - y.min())
    data_range = peak if peak > 0 else 1.0
    win = ssim_window(y.shape[:2], window)

    mse = np.empty(steps)
    nrmse = np.empty(steps)
    psnr = np.empty(steps)
    ssim = np.empty(steps)
    for t in range(steps):
        frame_p = p[:, :, t]
        frame_y = y[:, :, t]
        mse[t] = float(np.mean((frame_p - frame_y) ** 2))
        scale = _normalizer(frame_y, nrmse_norm)
        nrmse[t] = math.sqrt(mse[t]) / scale if scale > 0 else np.nan
        if mse[t] == 0.0:
            psnr[t] = np.inf
        elif peak > 0:
            psnr[t] = 10.0 * math.log10(peak**2 / mse[t])
        else:
            psnr[t] = np.nan
        if win is None:
            ssim[t] = np.nan
        else:
            ssim[t] = structural_similarity(
                frame_y, frame_p, win_size=win, data_range=data_range
            )
    return FramewiseMetrics(mse=mse, nrmse=nrmse, psnr=psnr, ssim=ssim)


# ----------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------


def _jsonable(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


@dataclass
class MetricsReport:
    """Location-averaged point errors plus optional frame-wise arrays."""

    rmse: float
    mae: float
    smape: float
    model: str = ""
    frames: FramewiseMetrics | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        data: dict = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "model": self.model,
            "rmse": self.rmse,
            "mae": self.mae,
            "smape": self.smape,
            "timings": dict(self.timings),
        }
        if self.frames is not None:
            data["steps"] = self.frames.steps
            data["framewise"] = {
                name: [_jsonable(v) for v in getattr(self.frames, name)]
                for name in FRAME_METRICS
            }
            data["framewise_mean"] = {k: _jsonable(v) for k, v in self.frames.means().items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> MetricsReport:
        frames = None
        if "framewise" in data:
            arrays = {
                name: np.array([np.nan if v is None else v for v in data["framewise"][name]],
                               dtype=float)
                for name in FRAME_METRICS
            }
            # null PSNR with zero MSE was an exact frame
            exact = (arrays["mse"] == 0.0) & np.isnan(arrays["psnr"])
            arrays["psnr"][exact] = np.inf
            frames = FramewiseMetrics(**arrays)
        return cls(
            rmse=float(data["rmse"]),
            mae=float(data["mae"]),
            smape=float(data["smape"]),
            model=data.get("model", ""),
            frames=frames,
            timings=dict(data.get("timings", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def steps_frame(self) -> pd.DataFrame:
        """Long ``step, metric, value`` table (steps 1-based) for plotting."""
        if self.frames is None:
            return pd.DataFrame(columns=["step", "metric", "value"])
        rows = []
        for name in FRAME_METRICS:
            for t, value in enumerate(getattr(self.frames, name), start=1):
                rows.append({"step": t, "metric": name, "value": _jsonable(value)})
        return pd.DataFrame(rows, columns=["step", "metric", "value"])

    def save(self, json_path: str | Path, csv_path: str | Path | None = None) -> None:
        atomic_write_text(json_path, self.to_json())
        if csv_path is not None:
            atomic_write_text(csv_path, self.steps_frame().to_csv(index=False))


def evaluate_forecast(
    pred: np.ndarray | DenseTensor,
    target: np.ndarray | DenseTensor,
    model: str = "",
    nrmse_norm: str = "range",
    window: int = DEFAULT_SSIM_WINDOW,
    include_frames: bool = True,
) -> MetricsReport:
    """Report for an M x N x k forecast against its target.

    RMSE, MAE and SMAPE are computed over time at every grid location and
    then averaged over locations.
    """
    p = np.asarray(getattr(pred, "data", pred), dtype=float)
    y = np.asarray(getattr(target, "data", target), dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {p.shape} differs from target {y.shape}")
    if y.ndim != 3:
        raise ShapeError(f"expected M x N x k tensors, got {y.shape}")
    m, n, steps = y.shape
    p_loc = p.reshape(m * n, steps)
    y_loc = y.reshape(m * n, steps)

    per_rmse = np.sqrt(np.mean((p_loc - y_loc) ** 2, axis=1))
    per_mae = np.mean(np.abs(p_loc - y_loc), axis=1)
    denom = (np.abs(y_loc) + np.abs(p_loc)) / 2.0
    diff = np.abs(p_loc - y_loc)
    terms = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    per_smape = 100.0 * terms.mean(axis=1)

    frames = framewise(p, y, nrmse_norm=nrmse_norm, window=window) if include_frames else None
    report = MetricsReport(
        rmse=float(per_rmse.mean()),
        mae=float(per_mae.mean()),
        smape=float(per_smape.mean()),
        model=model,
        frames=frames,
    )
    logger.info("Evaluated %s: RMSE %.4f, MAE %.4f, SMAPE %.3f%%",
                model or "forecast", report.rmse, report.mae, report.smape)
    return report
