"""Tests for the command-line front end and the pipeline runner."""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import logging

import numpy as np
import pytest
import yaml

from gridcast.cli import (
    DATASET_FILE,
    FORECAST_FILE,
    METRICS_FILE,
    STEPS_FILE,
    TEST_FILE,
    TRAIN_FILE,
    ForecastRunner,
    build_parser,
    cmd_compare,
    cmd_evaluate,
    cmd_fetch,
    cmd_fit,
    cmd_forecast,
    main,
    manifest_path,
    read_manifest,
)
from gridcast.config import CacheConfig, DatasetConfig, ModelConfig, RunConfig
from gridcast.evaluation.metrics import MetricsReport
from gridcast.ingest.series import load_series, save_series
from gridcast.synthetic import synthetic_series
from gridcast.tensor.io import load_tensor, save_tensor

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _runs(config_file):
    return config_file.parent / "runs"


def _report_file(path, model: str, value: float):
    report = MetricsReport(rmse=value, mae=value, smape=1.0, model=model,
                           timings={"fit_seconds": 1.0})
    path.write_text(report.to_json())
    return path


def _answer_points(session, payload_factory, value: float = 12.5):
    def payload_for(url, params):
        dates = _dates_between(params["start"], params["end"])
        return payload_factory([params["latitude"]], [params["longitude"]], dates,
                               lambda lat, lon, day: value)

    session.payload_for = payload_for


def _dates_between(start: str, end: str):
    first = dt.datetime.strptime(start, "%Y%m%d").date()
    last = dt.datetime.strptime(end, "%Y%m%d").date()
    return [first + dt.timedelta(days=i) for i in range((last - first).days + 1)]


# ===================================================================
# Argument parsing
# ===================================================================


class TestParser:
    def test_common_flags_after_subcommand(self):
        args = build_parser().parse_args(
            ["run", "--config", "g.yaml", "--seed", "3", "--out", "o", "--rank", "5"]
        )
        assert args.command == "run"
        assert args.config == "g.yaml"
        assert args.seed == 3
        assert args.out == "o"
        assert args.rank == 5

    def test_evaluate_positionals(self):
        args = build_parser().parse_args(["evaluate", "f.gctn", "t.gcfs", "--label", "x"])
        assert (args.forecast, args.target, args.label) == ("f.gctn", "t.gcfs", "x")

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


# ===================================================================
# Pipeline runner
# ===================================================================


class TestRun:
    def test_linear_fixture_forecast_is_exact(self, config_file, capsys):
        assert main(["run", "--config", str(config_file)]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["model"] == "ttdmd"
        assert data["rmse"] < 1e-6
        runs = _runs(config_file)
        for name in (TRAIN_FILE, TEST_FILE, "model.gcm", FORECAST_FILE, METRICS_FILE, STEPS_FILE):
            assert (runs / name).exists()

    def test_manifests_record_hashes_and_timings(self, config_file):
        config = RunConfig.from_yaml(config_file)
        runner = ForecastRunner(config)
        runner.run()
        runs = _runs(config_file)

        fitted = read_manifest(runs / "model.gcm")
        assert fitted["command"] == "fit"
        assert fitted["config_digest"] == config.digest()
        assert "numpy" in fitted["versions"]
        assert str(runs / "model.gcm") in fitted["outputs"]
        assert fitted["details"]["model"] == "ttdmd"

        forecast = read_manifest(runs / FORECAST_FILE)
        assert str(runs / "model.gcm") in forecast["inputs"]
        assert str(runs / TRAIN_FILE) in forecast["inputs"]
        assert set(forecast["timings"]) == {"fit_seconds", "inference_seconds"}

        report = json.loads((runs / METRICS_FILE).read_text())
        assert set(report["timings"]) == {"fit_seconds", "inference_seconds"}

    def test_repeated_runs_are_bit_identical(self, config_file, tmp_path):
        base = RunConfig.from_yaml(config_file)
        for name in ("a", "b"):
            ForecastRunner(base.with_overrides(output_dir=str(tmp_path / name))).run()
        first = (tmp_path / "a" / FORECAST_FILE).read_bytes()
        assert first == (tmp_path / "b" / FORECAST_FILE).read_bytes()

    def test_data_file_hash_in_manifest(self, config_file, tmp_path):
        data = save_series(tmp_path / "input.gcfs", synthetic_series("linear"))
        config = RunConfig.from_yaml(config_file)
        model_path = ForecastRunner(config).fit(data)
        assert str(data) in read_manifest(model_path)["inputs"]

    @pytest.mark.parametrize("kind, section", [
        ("mar", {"iters": 20}),
        ("dmd", {"rank": 6}),
        ("cluster", {"k": 4, "p": 2, "h": 7}),
        ("sample", {"n": 6, "p": 2, "h": 7}),
    ])
    def test_every_model_family(self, run_config, kind, section):
        config = dataclasses.replace(
            run_config,
            dataset=DatasetConfig(source="synthetic", synthetic="linear"),
            model=ModelConfig.from_dict({kind: section}),
        )
        report = ForecastRunner(config).run()
        assert report.model == kind
        assert report.frames.steps == 7
        assert np.isfinite(report.rmse)

    def test_dmd_reproduces_linear_fixture(self, run_config):
        config = dataclasses.replace(
            run_config,
            dataset=DatasetConfig(source="synthetic", synthetic="linear"),
            model=ModelConfig.from_dict({"dmd": {"rank": 6}}),
        )
        assert ForecastRunner(config).run().rmse < 1e-6


class TestStepByStep:
    def test_fit_forecast_evaluate(self, config_file):
        runs = _runs(config_file)
        assert main(["fit", "--config", str(config_file)]) == 0
        assert main(["forecast", "--config", str(config_file), "--horizon", "10"]) == 0
        assert load_tensor(runs / FORECAST_FILE).shape == (8, 10, 10)
        assert main(["evaluate", str(runs / FORECAST_FILE), str(runs / TEST_FILE),
                     "--config", str(config_file), "--label", "tt"]) == 0
        report = json.loads((runs / METRICS_FILE).read_text())
        assert report["model"] == "tt"
        assert report["steps"] == 7

    def test_overlap_warning(self, config_file, caplog):
        config = RunConfig.from_yaml(config_file).with_overrides(horizon=9)
        runs = config.output_path
        cmd_forecast(config, cmd_fit(config))
        with caplog.at_level(logging.WARNING, logger="gridcast.cli"):
            cmd_evaluate(config, runs / FORECAST_FILE, runs / TEST_FILE)
        assert "scoring the first 7" in caplog.text

    def test_forecast_equal_to_target_scores_zero(self, run_config, tmp_path):
        test = synthetic_series("linear").values.data[:, :, -7:]
        forecast = save_tensor(tmp_path / "same.gctn", test)
        target = save_tensor(tmp_path / "target.gctn", test)
        report = cmd_evaluate(run_config, forecast, target)
        assert report.rmse == 0.0
        assert report.mae == 0.0

    def test_compare_ranks_by_rmse(self, run_config, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("GRIDCAST_CONFIG", raising=False)
        monkeypatch.chdir(tmp_path)
        mar = _report_file(tmp_path / "mar.json", "mar", 4.45)
        tt = _report_file(tmp_path / "tt.json", "ttdmd", 3.01)
        frame = cmd_compare(run_config, [mar, tt])
        assert frame["Model"].tolist() == ["ttdmd", "mar"]
        out = run_config.output_path
        ranking = json.loads((out / "comparison.json").read_text())
        assert ranking["ranking"][0]["Model"] == "ttdmd"
        assert "ttdmd" in (out / "comparison.txt").read_text()
        assert manifest_path(out / "comparison.json").exists()

        assert main(["compare", str(mar), str(tt), "--out", str(tmp_path / "cmp")]) == 0
        out = capsys.readouterr().out
        assert out.index("ttdmd") < out.index("mar")


class TestFetch:
    def test_fetch_then_cached(self, run_config, fetch_config, mock_session, payload_factory,
                               tmp_path, monkeypatch):
        monkeypatch.delenv("GRIDCAST_CACHE_DIR", raising=False)
        _answer_points(mock_session, payload_factory)
        config = dataclasses.replace(
            run_config,
            dataset=DatasetConfig(source="fetch"),
            fetch=fetch_config,
            cache=CacheConfig(directory=str(tmp_path / "cache")),
        )
        target = ForecastRunner(config, session=mock_session).fetch()
        assert target.name == DATASET_FILE
        series = load_series(target)
        assert series.shape == (3, 5, 3)
        assert np.all(series.values.data == 12.5)
        assert (target.parent / "dataset.csv").exists()
        assert read_manifest(target)["details"]["shape"] == [3, 5, 3]

        calls = mock_session.get.call_count
        again = ForecastRunner(config, session=mock_session).fetch()
        assert mock_session.get.call_count == calls
        assert load_series(again).values.data.tobytes() == series.values.data.tobytes()

    def test_synthetic_dataset_materialized(self, run_config):
        config = dataclasses.replace(run_config, dataset=DatasetConfig(synthetic="linear"))
        target = cmd_fetch(config)
        series = load_series(target)
        assert series.values.data.tobytes() == synthetic_series("linear").values.data.tobytes()
        assert read_manifest(target)["inputs"] == {}


# ===================================================================
# Exit codes
# ===================================================================


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "absent.yaml")]) == 2

    def test_bad_horizon_flag(self, config_file):
        assert main(["run", "--config", str(config_file), "--horizon", "0"]) == 2

    def test_malformed_data_file(self, config_file, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("latitude,longitude,day,tmax\n1,2,2020-01-01,3\n")
        assert main(["fit", "--config", str(config_file), "--data", str(bad)]) == 3

    def test_missing_model_file(self, config_file, tmp_path):
        assert main(["forecast", "--config", str(config_file),
                     "--model", str(tmp_path / "absent.gcm")]) == 5

    def test_unexpected_failure(self, config_file, monkeypatch):
        def boom(self, data=None):
            raise RuntimeError("boom")

        monkeypatch.setattr(ForecastRunner, "run", boom)
        assert main(["run", "--config", str(config_file)]) == 1

    @pytest.mark.parametrize("section", [
        {"ttdmd": {"anchor": "middle"}},
        {"mar": {"init": "zeros"}},
        {"cluster": {"strategy": "sideways"}},
        {"sample": {"strategy": "sideways"}},
    ])
    def test_unknown_model_option(self, tmp_path, section):
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump({
            "dataset": {"source": "synthetic", "synthetic": "linear"},
            "model": section,
            "output_dir": str(tmp_path / "runs"),
        }))
        assert main(["run", "--config", str(path)]) == 2
        assert not (tmp_path / "runs").exists()
