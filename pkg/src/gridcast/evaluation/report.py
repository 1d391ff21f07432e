"""Ranking table across several metrics reports."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import pandas as pd

from gridcast.errors import FormatError
from gridcast.evaluation.metrics import REPORT_SCHEMA_VERSION, MetricsReport
from gridcast.fileio import read_bytes

logger = logging.getLogger(__name__)

COLUMNS = ["Model", "RMSE", "MAE", "SMAPE", "NRMSE", "PSNR", "SSIM", "Time (s)"]


def load_report(path: str | Path) -> MetricsReport:
    try:
        data = json.loads(read_bytes(path))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} is not a metrics report: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise FormatError(f"{path} has an unsupported metrics report schema")
    report = MetricsReport.from_dict(data)
    if not report.model:
        report.model = Path(path).stem
    return report


def ranking_frame(reports: list[MetricsReport]) -> pd.DataFrame:
    """One row per report, best RMSE first; ties keep the input order."""
    rows = []
    for report in reports:
        means = report.frames.means() if report.frames is not None else {}
        rows.append({
            "Model": report.model,
            "RMSE": report.rmse,
            "MAE": report.mae,
            "SMAPE": report.smape,
            "NRMSE": means.get("nrmse"),
            "PSNR": means.get("psnr"),
            "SSIM": means.get("ssim"),
            "Time (s)": sum(report.timings.values()) if report.timings else None,
        })
    frame = pd.DataFrame(rows, columns=COLUMNS)
    frame[COLUMNS[1:]] = frame[COLUMNS[1:]].astype(float)
    frame = frame.sort_values("RMSE", kind="stable").reset_index(drop=True)
    frame.insert(0, "Rank", range(1, len(frame) + 1))
    return frame


def render_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.4f}")


def ranking_json(frame: pd.DataFrame) -> str:
    records = frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
    return json.dumps({"schema_version": REPORT_SCHEMA_VERSION, "ranking": records}, indent=2)


def compare_reports(paths: list[str | Path]) -> pd.DataFrame:
    """Load every report and rank them by RMSE."""
    reports = [load_report(p) for p in paths]
    logger.info("Comparing %d report(s)", len(reports))
    return ranking_frame(reports)
