"""gridcast command-line front end.

Ties fetch -> fit -> forecast -> evaluate -> compare into reproducible runs
driven by a config file. Every artifact is written next to a manifest that
records the config hash, package versions, input hashes and timings.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import requests

from gridcast import __version__
from gridcast.config import RunConfig, load_config
from gridcast.errors import FormatError, GridcastError, ShapeError
from gridcast.evaluation.metrics import MetricsReport, evaluate_forecast
from gridcast.evaluation.report import compare_reports, ranking_json, render_table
from gridcast.fileio import atomic_write_text, read_bytes, sha256_file
from gridcast.geo.clustering import cluster_haversine_kmeans
from gridcast.geo.local import (
    LocalModelSet,
    fit_cluster_models,
    load_local_models,
    save_local_models,
)
from gridcast.geo.sampling import sample_plan
from gridcast.ingest.cache import ResponseCache
from gridcast.ingest.csv_store import load_grid_csv, save_grid_csv
from gridcast.ingest.power import PowerClient
from gridcast.ingest.series import FieldSeries, SplitSpec, load_series, save_series, split
from gridcast.models.dmd import DmdModel, build_snapshot_pair, dmd_fit, dmd_forecast
from gridcast.models.mar import MarModel, mar_fit_als, mar_predict
from gridcast.models.serialization import load_model, save_model
from gridcast.models.ttdmd import TtDmdModel, build_tt_snapshot_tensors, ttdmd_fit, ttdmd_forecast
from gridcast.synthetic import synthetic_series
from gridcast.tensor.dense import ORDER
from gridcast.tensor.io import load_tensor, save_tensor

logger = logging.getLogger(__name__)

EXIT_UNEXPECTED = 1
MANIFEST_VERSION = 1
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "requests", "scikit-image", "PyYAML")

DATASET_FILE = "dataset.gcfs"
DATASET_CSV = "dataset.csv"
TRAIN_FILE = "train.gcfs"
TEST_FILE = "test.gcfs"
FORECAST_FILE = "forecast.gctn"
METRICS_FILE = "metrics.json"
STEPS_FILE = "metrics_steps.csv"
COMPARISON_JSON = "comparison.json"
COMPARISON_TEXT = "comparison.txt"

SpectralModel = DmdModel | TtDmdModel | MarModel


def model_filename(kind: str) -> str:
    return "model.json" if kind in ("cluster", "sample") else "model.gcm"


def package_versions() -> dict[str, str]:
    versions = {"gridcast": __version__, "python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


# ======================================================================
# Manifests
# ======================================================================


@dataclass
class RunManifest:
    """Provenance record written beside an artifact."""

    command: str
    config_digest: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    versions: dict[str, str] = field(default_factory=package_versions)

    def record_output(self, path: Path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def to_dict(self) -> dict:
        return {
            "manifest_version": MANIFEST_VERSION,
            "command": self.command,
            "config_digest": self.config_digest,
            "versions": self.versions,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings": self.timings,
            "details": self.details,
        }

    def write(self, artifact: Path) -> Path:
        return atomic_write_text(manifest_path(artifact),
                                 json.dumps(self.to_dict(), indent=2, default=str))


def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(f"{artifact.stem}.manifest.json")


def read_manifest(artifact: str | Path) -> dict | None:
    """Manifest of ``artifact`` if one exists beside it."""
    path = manifest_path(artifact)
    if not path.exists():
        return None
    try:
        return json.loads(read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc


def load_field_file(path: str | Path) -> FieldSeries:
    """A field series from CSV (``.csv``) or the binary series format."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_grid_csv(path)
    return load_series(path)


# ======================================================================
# Runner
# ======================================================================


class ForecastRunner:
    """Runs the pipeline steps for one configuration.

    Artifacts land in ``config.output_dir``:
      1. ``fetch``    -> dataset.gcfs (+ CSV)
      2. ``fit``      -> train.gcfs, test.gcfs, model file
      3. ``forecast`` -> forecast.gctn
      4. ``evaluate`` -> metrics.json, metrics_steps.csv
      5. ``compare``  -> comparison.txt, comparison.json
    """

    def __init__(
        self,
        config: RunConfig,
        session: requests.Session | None = None,
    ) -> None:
        self.config = config
        self.session = session
        self.out = config.output_path

    def _manifest(self, command: str) -> RunManifest:
        return RunManifest(command=command, config_digest=self.config.digest())

    # ------------------------------------------------------------------
    # Data
    # ------------------------------------------------------------------

    def load_dataset(self, path: str | Path | None = None) -> tuple[FieldSeries, dict[str, str]]:
        """The configured series plus the hashes of any files it was read from."""
        dataset = self.config.dataset
        if path is None and dataset.source == "path":
            path = Path(dataset.path).expanduser()
        if path is not None:
            series = load_field_file(path)
            return series, {str(path): sha256_file(path)}
        if dataset.source == "fetch":
            cache = ResponseCache(self.config.cache.cache_path)
            client = PowerClient(self.config.fetch, cache=cache, session=self.session)
            series = client.fetch()
            logger.info("POWER fetch: %d request(s) sent, %d cache hit(s)",
                        client.requests_sent, cache.hits)
            return series, {}
        logger.info("Generating synthetic %r dataset (seed %d)",
                    dataset.synthetic, dataset.synthetic_seed)
        return synthetic_series(dataset.synthetic, dataset.synthetic_seed), {}

    def split_series(self, series: FieldSeries) -> tuple[FieldSeries, FieldSeries]:
        cfg = self.config.split
        if cfg.has_dates:
            spec = SplitSpec(cfg.train_start, cfg.train_end, cfg.test_start, cfg.test_end)
        else:
            spec = SplitSpec.tail(series, cfg.test_length)
        return split(series, spec)

    def fetch(self) -> Path:
        """Materialize the configured dataset in the output directory."""
        manifest = self._manifest("fetch")
        started = time.perf_counter()
        series, inputs = self.load_dataset()
        manifest.timings["fetch_seconds"] = time.perf_counter() - started
        manifest.inputs.update(inputs)

        target = self.out / DATASET_FILE
        save_series(target, series)
        csv_path = save_grid_csv(series, self.out / DATASET_CSV)
        manifest.record_output(target)
        manifest.record_output(csv_path)
        manifest.details = {"shape": list(series.shape), "start": series.start,
                            "end": series.end, "variable": series.variable}
        manifest.write(target)
        logger.info("Dataset %s (%s..%s) written to %s",
                    series.shape, series.start, series.end, target)
        return target

    # ------------------------------------------------------------------
    # Fit / forecast
    # ------------------------------------------------------------------

    def fit(self, data: str | Path | None = None) -> Path:
        """Split the dataset, fit the configured model and save it."""
        manifest = self._manifest("fit")
        series, inputs = self.load_dataset(data)
        manifest.inputs.update(inputs)
        train, test = self.split_series(series)
        train_path = save_series(self.out / TRAIN_FILE, train)
        test_path = save_series(self.out / TEST_FILE, test)

        kind = self.config.model.kind
        logger.info("Fitting %s on %d training days", kind, train.steps)
        started = time.perf_counter()
        model = self._fit_model(train)
        manifest.timings["fit_seconds"] = time.perf_counter() - started

        model_path = self.out / model_filename(kind)
        if isinstance(model, LocalModelSet):
            save_local_models(model_path, model)
        else:
            save_model(model_path, model)
        for path in (train_path, test_path, model_path):
            manifest.record_output(path)
        manifest.details = {"model": kind, **self._describe(model)}
        manifest.write(model_path)
        logger.info("Model written to %s (%.2fs)", model_path, manifest.timings["fit_seconds"])
        return model_path

    def _fit_model(self, train: FieldSeries) -> SpectralModel | LocalModelSet:
        kind = self.config.model.kind
        section = self.config.model.active
        if kind == "ttdmd":
            return ttdmd_fit(build_tt_snapshot_tensors(train), rank=section.rank,
                             energy=section.energy)
        if kind == "dmd":
            snapshots = np.reshape(train.values.data, (-1, train.steps), order=ORDER)
            return dmd_fit(build_snapshot_pair(snapshots), rank=section.rank)
        if kind == "mar":
            return mar_fit_als(train, max_iters=section.iters, rel_tol=section.rel_tol,
                               init=section.init, seed=section.seed, ridge=section.ridge)
        if kind == "cluster":
            plan = cluster_haversine_kmeans(train.grid, section.k, seed=section.seed,
                                            max_iters=section.max_iters)
        else:
            plan = sample_plan(train.grid, section.n, lat_weight=section.lat_weight,
                               seed=section.seed)
        models = fit_cluster_models(plan, train, p=section.p, h=section.h,
                                    strategy=section.strategy)
        return LocalModelSet(plan=plan, models=tuple(models))

    @staticmethod
    def _describe(model: SpectralModel | LocalModelSet) -> dict[str, Any]:
        if isinstance(model, TtDmdModel):
            return {"modes": model.rank, "final_tt_rank": model.effective_rank}
        if isinstance(model, DmdModel):
            return {"modes": model.rank, "requested_rank": model.requested_rank}
        if isinstance(model, MarModel):
            return {"iterations": model.iterations_run, "converged": model.converged,
                    "final_loss": model.final_loss, "parameters": model.parameter_count}
        return {"clusters": model.plan.k, "inertia": model.plan.inertia,
                "persistence_models": model.persistence_count}

    def load_fitted(self, path: str | Path) -> SpectralModel | LocalModelSet:
        path = Path(path)
        if path.suffix.lower() == ".json":
            return load_local_models(path)
        return load_model(path)

    def forecast(
        self,
        model_path: str | Path | None = None,
        history_path: str | Path | None = None,
    ) -> Path:
        """Forecast ``horizon`` days after the end of the history series."""
        model_path = Path(model_path or self.out / model_filename(self.config.model.kind))
        history_path = Path(history_path or self.out / TRAIN_FILE)
        manifest = self._manifest("forecast")
        manifest.inputs = {str(model_path): sha256_file(model_path),
                           str(history_path): sha256_file(history_path)}

        model = self.load_fitted(model_path)
        history = load_field_file(history_path)
        started = time.perf_counter()
        values = self.forecast_values(model, history, self.config.horizon)
        manifest.timings["inference_seconds"] = time.perf_counter() - started
        fitted = read_manifest(model_path) or {}
        if "fit_seconds" in fitted.get("timings", {}):
            manifest.timings["fit_seconds"] = fitted["timings"]["fit_seconds"]

        target = save_tensor(self.out / FORECAST_FILE, values)
        manifest.record_output(target)
        manifest.details = {
            "model": fitted.get("details", {}).get("model", model_path.stem),
            "steps": self.config.horizon,
            "first_date": history.continuation(values).start,
        }
        manifest.write(target)
        logger.info("Forecast of %d step(s) written to %s", self.config.horizon, target)
        return target

    def forecast_values(
        self,
        model: SpectralModel | LocalModelSet,
        history: FieldSeries,
        steps: int,
    ) -> np.ndarray:
        """M x N x steps forecast continuing ``history``."""
        last = history.values.data[:, :, -1]
        if isinstance(model, TtDmdModel):
            if self.config.model.ttdmd.anchor == "first":
                return ttdmd_forecast(model, steps=steps, anchor="first").values.data
            return ttdmd_forecast(model, x0=last, steps=steps).values.data
        if isinstance(model, DmdModel):
            flat = dmd_forecast(model, np.reshape(last, -1, order=ORDER), steps).values.data
            return np.reshape(flat, last.shape + (steps,), order=ORDER)
        if isinstance(model, MarModel):
            return mar_predict(model, last, steps).data
        return model.forecast(history, steps).values.data

    # ------------------------------------------------------------------
    # Evaluate / compare
    # ------------------------------------------------------------------

    def evaluate(
        self,
        forecast_path: str | Path,
        target_path: str | Path,
        label: str | None = None,
    ) -> MetricsReport:
        """Score a forecast tensor against a target series or tensor."""
        forecast_path = Path(forecast_path)
        target_path = Path(target_path)
        manifest = self._manifest("evaluate")
        manifest.inputs = {str(forecast_path): sha256_file(forecast_path),
                           str(target_path): sha256_file(target_path)}

        pred = load_tensor(forecast_path).data
        if target_path.suffix.lower() == ".gctn":
            target = load_tensor(target_path).data
        else:
            target = load_field_file(target_path).values.data
        if pred.ndim != 3 or target.ndim != 3 or pred.shape[:2] != target.shape[:2]:
            raise ShapeError(f"forecast {pred.shape} and target {target.shape} do not align")
        steps = min(pred.shape[2], target.shape[2])
        if pred.shape[2] != target.shape[2]:
            logger.warning("Forecast has %d steps, target %d; scoring the first %d",
                           pred.shape[2], target.shape[2], steps)

        produced = read_manifest(forecast_path) or {}
        name = label or produced.get("details", {}).get("model") or forecast_path.stem
        metrics = self.config.metrics
        report = evaluate_forecast(pred[:, :, :steps], target[:, :, :steps], model=name,
                                   nrmse_norm=metrics.nrmse_norm, window=metrics.ssim_window)
        report.timings = dict(produced.get("timings", {}))

        json_path = self.out / METRICS_FILE
        csv_path = self.out / STEPS_FILE
        report.save(json_path, csv_path)
        manifest.record_output(json_path)
        manifest.record_output(csv_path)
        manifest.details = {"model": name, "steps": steps}
        manifest.write(json_path)
        return report

    def compare(self, report_paths: list[str | Path]) -> pd.DataFrame:
        """Rank reports by RMSE; writes text and JSON tables."""
        manifest = self._manifest("compare")
        manifest.inputs = {str(p): sha256_file(p) for p in report_paths}
        frame = compare_reports(report_paths)
        text_path = atomic_write_text(self.out / COMPARISON_TEXT, render_table(frame) + "\n")
        json_path = atomic_write_text(self.out / COMPARISON_JSON, ranking_json(frame))
        manifest.record_output(text_path)
        manifest.record_output(json_path)
        manifest.write(json_path)
        return frame

    def run(self, data: str | Path | None = None) -> MetricsReport:
        """fit, forecast and evaluate against the held-out test range."""
        model_path = self.fit(data)
        forecast_path = self.forecast(model_path)
        return self.evaluate(forecast_path, self.out / TEST_FILE)


# ======================================================================
# Commands
# ======================================================================


def cmd_fetch(config: RunConfig) -> Path:
    return ForecastRunner(config).fetch()


def cmd_fit(config: RunConfig, data: str | Path | None = None) -> Path:
    return ForecastRunner(config).fit(data)


def cmd_forecast(
    config: RunConfig,
    model_path: str | Path | None = None,
    history_path: str | Path | None = None,
) -> Path:
    return ForecastRunner(config).forecast(model_path, history_path)


def cmd_evaluate(
    config: RunConfig,
    forecast_path: str | Path,
    target_path: str | Path,
    label: str | None = None,
) -> MetricsReport:
    return ForecastRunner(config).evaluate(forecast_path, target_path, label)


def cmd_compare(config: RunConfig, report_paths: list[str | Path]) -> pd.DataFrame:
    return ForecastRunner(config).compare(report_paths)


# ======================================================================
# CLI entry point
# ======================================================================


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", type=str, default=None,
                        help="Path to config YAML file")
    common.add_argument("--seed", type=int, default=None, help="Override every model seed")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--horizon", type=int, default=None, help="Forecast steps")
    common.add_argument("--rank", type=int, default=None, help="DMD / TT-DMD rank")
    common.add_argument("--ridge", type=float, default=None, help="MAR ridge penalty")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")

    parser = argparse.ArgumentParser(
        prog="gridcast",
        description="gridcast - forecasting of gridded weather fields",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fetch", parents=[common], help="Materialize the configured dataset")

    fit = sub.add_parser("fit", parents=[common], help="Split the data and fit the model")
    fit.add_argument("--data", type=str, default=None, help="Dataset file (.gcfs or .csv)")

    forecast = sub.add_parser("forecast", parents=[common], help="Forecast with a fitted model")
    forecast.add_argument("--model", type=str, default=None, help="Model file")
    forecast.add_argument("--history", type=str, default=None,
                          help="Series the forecast continues (default: train split)")

    evaluate = sub.add_parser("evaluate", parents=[common], help="Score a forecast")
    evaluate.add_argument("forecast", help="Forecast tensor file")
    evaluate.add_argument("target", help="Target series (.gcfs/.csv) or tensor (.gctn)")
    evaluate.add_argument("--label", type=str, default=None, help="Model name in the report")

    compare = sub.add_parser("compare", parents=[common], help="Rank metrics reports")
    compare.add_argument("reports", nargs="+", help="metrics.json files")

    run = sub.add_parser("run", parents=[common], help="fit, forecast and evaluate")
    run.add_argument("--data", type=str, default=None, help="Dataset file (.gcfs or .csv)")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Command-line entry point for gridcast."""
    parser = build_parser()
    args = parser.parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed,
            output_dir=args.out,
            horizon=args.horizon,
            rank=args.rank,
            ridge=args.ridge,
        )
        runner = ForecastRunner(config)
        if args.command == "fetch":
            runner.fetch()
        elif args.command == "fit":
            runner.fit(args.data)
        elif args.command == "forecast":
            runner.forecast(args.model, args.history)
        elif args.command == "evaluate":
            report = runner.evaluate(args.forecast, args.target, args.label)
            print(report.to_json())
        elif args.command == "compare":
            print(render_table(runner.compare(args.reports)))
        elif args.command == "run":
            print(runner.run(args.data).to_json())
    except GridcastError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_UNEXPECTED
    return 0


if __name__ == "__main__":
    sys.exit(main())
