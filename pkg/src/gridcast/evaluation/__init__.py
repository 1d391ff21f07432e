"""Evaluation module - error metrics, metrics reports and model comparison."""

from gridcast.evaluation.metrics import (
    FramewiseMetrics,
    MetricsReport,
    evaluate_forecast,
    framewise,
    mae,
    rmse,
    smape,
)
from gridcast.evaluation.report import compare_reports, load_report, ranking_frame, render_table

__all__ = [
    "rmse",
    "mae",
    "smape",
    "framewise",
    "FramewiseMetrics",
    "MetricsReport",
    "evaluate_forecast",
    "compare_reports",
    "load_report",
    "ranking_frame",
    "render_table",
]
