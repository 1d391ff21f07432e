"""Models module - exact DMD, tensor-train DMD and matrix autoregression."""

from gridcast.models.dmd import (
    DmdModel,
    SnapshotPair,
    build_snapshot_pair,
    dmd_fit,
    dmd_forecast,
    dmd_predict_next,
)
from gridcast.models.forecast import Forecast
from gridcast.models.mar import MarModel, mar_fit_als, mar_loss, mar_predict
from gridcast.models.serialization import load_model, model_from_bytes, model_to_bytes, save_model
from gridcast.models.ttdmd import (
    TtDmdModel,
    TtSnapshotTensors,
    build_tt_snapshot_tensors,
    ttdmd_fit,
    ttdmd_forecast,
)

__all__ = [
    "DmdModel",
    "SnapshotPair",
    "build_snapshot_pair",
    "dmd_fit",
    "dmd_forecast",
    "dmd_predict_next",
    "Forecast",
    "MarModel",
    "mar_fit_als",
    "mar_loss",
    "mar_predict",
    "TtDmdModel",
    "TtSnapshotTensors",
    "build_tt_snapshot_tensors",
    "ttdmd_fit",
    "ttdmd_forecast",
    "load_model",
    "save_model",
    "model_from_bytes",
    "model_to_bytes",
]
