"""Configuration management for gridcast runs.

Loads from YAML file with environment variable expansion.
All values have sensible defaults for quick start; command-line flags
override file values through :meth:`RunConfig.with_overrides`.
"""

from __future__ import annotations

import copy
import dataclasses
import datetime as dt
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from gridcast.errors import ConfigError
from gridcast.fileio import sha256_bytes
from gridcast.ingest.cache import resolve_cache_dir

MODEL_KINDS = ("ttdmd", "mar", "cluster", "sample", "dmd")
DATASET_SOURCES = ("path", "fetch", "synthetic")
NRMSE_NORMS = ("range", "mean", "std")
TTDMD_ANCHORS = ("last", "first")
MAR_INITS = ("identity", "random")
LOCAL_STRATEGIES = ("recursive", "direct")

REGIONAL_ENDPOINT = "https://power.larc.nasa.gov/api/temporal/daily/regional"
POINT_ENDPOINT = "https://power.larc.nasa.gov/api/temporal/daily/point"


def _expand_env_vars(value: Any) -> Any:
    """Recursively expand ${ENV_VAR} references in config values."""
    if isinstance(value, str):
        pattern = re.compile(r"\$\{([^}]+)\}")
        def replacer(match: re.Match) -> str:
            env_key = match.group(1)
            env_val = os.environ.get(env_key)
            if env_val is None:
                raise ConfigError(f"Environment variable '{env_key}' not set")
            return env_val
        return pattern.sub(replacer, value)
    if isinstance(value, dict):
        return {k: _expand_env_vars(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_expand_env_vars(item) for item in value]
    return value


def _choice(value: Any, allowed: tuple[str, ...], name: str) -> None:
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


def _parse_date(value: Any, name: str) -> dt.date | None:
    if value is None or value == "":
        return None
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{name}: expected YYYY-MM-DD, got {value!r}") from exc


@dataclass
class DatasetConfig:
    """Where the field series comes from."""
    source: str = "synthetic"
    path: str = ""
    synthetic: str = "weather"
    synthetic_seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> DatasetConfig:
        config = cls(
            source=data.get("source", "synthetic"),
            path=data.get("path", ""),
            synthetic=data.get("synthetic", "weather"),
            synthetic_seed=data.get("synthetic_seed", 0),
        )
        if config.source not in DATASET_SOURCES:
            raise ConfigError(f"dataset.source must be one of {DATASET_SOURCES}, "
                              f"got {config.source!r}")
        if config.source == "path" and not config.path:
            raise ConfigError("dataset.path is required when dataset.source is 'path'")
        return config


@dataclass
class FetchConfig:
    """NASA POWER request settings."""
    lat_min: float = 30.0
    lat_max: float = 54.5
    lon_min: float = 4.0
    lon_max: float = 51.5
    resolution: float = 0.5
    start: str = "2015-10-30"
    end: str = "2020-11-15"
    parameter: str = "TMAX"
    parameter_map: dict[str, str] = field(default_factory=lambda: {"TMAX": "T2M_MAX"})
    endpoint: str = REGIONAL_ENDPOINT
    point_endpoint: str = POINT_ENDPOINT
    community: str = "AG"
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 1.0
    timeout: int = 60
    forward_fill: bool = False
    max_tile_degrees: float = 10.0
    min_regional_degrees: float = 2.0

    _DEFAULT_PARAMETER_MAP = {"TMAX": "T2M_MAX"}

    @classmethod
    def from_dict(cls, data: dict) -> FetchConfig:
        bbox = data.get("bbox", {})
        return cls(
            lat_min=float(bbox.get("lat_min", 30.0)),
            lat_max=float(bbox.get("lat_max", 54.5)),
            lon_min=float(bbox.get("lon_min", 4.0)),
            lon_max=float(bbox.get("lon_max", 51.5)),
            resolution=float(data.get("resolution", 0.5)),
            start=str(data.get("start", "2015-10-30")),
            end=str(data.get("end", "2020-11-15")),
            parameter=data.get("parameter", "TMAX"),
            parameter_map=dict(data.get("parameter_map", cls._DEFAULT_PARAMETER_MAP)),
            endpoint=data.get("endpoint", REGIONAL_ENDPOINT),
            point_endpoint=data.get("point_endpoint", POINT_ENDPOINT),
            community=data.get("community", "AG"),
            max_in_flight=data.get("max_in_flight", 4),
            retries=data.get("retries", 3),
            backoff=data.get("backoff", 1.0),
            timeout=data.get("timeout", 60),
            forward_fill=data.get("forward_fill", False),
            max_tile_degrees=data.get("max_tile_degrees", 10.0),
            min_regional_degrees=data.get("min_regional_degrees", 2.0),
        )

    @property
    def service_parameter(self) -> str:
        """Service-side parameter name for :attr:`parameter`."""
        return self.parameter_map.get(self.parameter, self.parameter)

    @property
    def start_date(self) -> dt.date:
        return _parse_date(self.start, "fetch.start")

    @property
    def end_date(self) -> dt.date:
        return _parse_date(self.end, "fetch.end")


@dataclass
class SplitConfig:
    """Train/test split: explicit dates, or the last ``test_length`` days."""
    train_start: dt.date | None = None
    train_end: dt.date | None = None
    test_start: dt.date | None = None
    test_end: dt.date | None = None
    test_length: int = 7

    @classmethod
    def from_dict(cls, data: dict) -> SplitConfig:
        config = cls(
            train_start=_parse_date(data.get("train_start"), "split.train_start"),
            train_end=_parse_date(data.get("train_end"), "split.train_end"),
            test_start=_parse_date(data.get("test_start"), "split.test_start"),
            test_end=_parse_date(data.get("test_end"), "split.test_end"),
            test_length=data.get("test_length", 7),
        )
        dates = [config.train_start, config.train_end, config.test_start, config.test_end]
        if any(d is not None for d in dates) and not all(d is not None for d in dates):
            raise ConfigError("split dates must be given all together or not at all")
        return config

    @property
    def has_dates(self) -> bool:
        return self.train_start is not None


@dataclass
class TtDmdConfig:
    rank: int | None = None
    energy: float = 0.9999
    anchor: str = "last"

    def __post_init__(self) -> None:
        _choice(self.anchor, TTDMD_ANCHORS, "model.ttdmd.anchor")

    @classmethod
    def from_dict(cls, data: dict) -> TtDmdConfig:
        return cls(rank=data.get("rank"), energy=data.get("energy", 0.9999),
                   anchor=data.get("anchor", "last"))


@dataclass
class DmdConfig:
    rank: int = 10

    @classmethod
    def from_dict(cls, data: dict) -> DmdConfig:
        return cls(rank=data.get("rank", 10))


@dataclass
class MarConfig:
    iters: int = 500
    rel_tol: float = 1e-10
    ridge: float = 0.0
    init: str = "identity"
    seed: int = 0

    def __post_init__(self) -> None:
        _choice(self.init, MAR_INITS, "model.mar.init")

    @classmethod
    def from_dict(cls, data: dict) -> MarConfig:
        return cls(
            iters=data.get("iters", 500),
            rel_tol=data.get("rel_tol", 1e-10),
            ridge=data.get("ridge", 0.0),
            init=data.get("init", "identity"),
            seed=data.get("seed", 0),
        )


@dataclass
class ClusterConfig:
    k: int = 70
    p: int = 5
    h: int = 7
    seed: int = 0
    max_iters: int = 100
    strategy: str = "recursive"

    def __post_init__(self) -> None:
        _choice(self.strategy, LOCAL_STRATEGIES, "model.cluster.strategy")

    @classmethod
    def from_dict(cls, data: dict) -> ClusterConfig:
        return cls(
            k=data.get("k", 70),
            p=data.get("p", 5),
            h=data.get("h", 7),
            seed=data.get("seed", 0),
            max_iters=data.get("max_iters", 100),
            strategy=data.get("strategy", "recursive"),
        )


@dataclass
class SampleConfig:
    n: int = 70
    lat_weight: float = 3.0
    p: int = 5
    h: int = 7
    seed: int = 0
    strategy: str = "recursive"

    def __post_init__(self) -> None:
        _choice(self.strategy, LOCAL_STRATEGIES, "model.sample.strategy")

    @classmethod
    def from_dict(cls, data: dict) -> SampleConfig:
        return cls(
            n=data.get("n", 70),
            lat_weight=data.get("lat_weight", 3.0),
            p=data.get("p", 5),
            h=data.get("h", 7),
            seed=data.get("seed", 0),
            strategy=data.get("strategy", "recursive"),
        )


@dataclass
class ModelConfig:
    """Exactly one model family per run; ``kind`` names it."""
    kind: str = "ttdmd"
    ttdmd: TtDmdConfig = field(default_factory=TtDmdConfig)
    dmd: DmdConfig = field(default_factory=DmdConfig)
    mar: MarConfig = field(default_factory=MarConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        present = [kind for kind in MODEL_KINDS if kind in data]
        unknown = sorted(set(data) - set(MODEL_KINDS))
        if unknown:
            raise ConfigError(f"unknown model section(s): {', '.join(unknown)}")
        if len(present) > 1:
            raise ConfigError(f"exactly one model section allowed, got {', '.join(present)}")
        kind = present[0] if present else "ttdmd"
        section = data.get(kind) or {}
        config = cls(kind=kind)
        parsers = {
            "ttdmd": TtDmdConfig.from_dict,
            "dmd": DmdConfig.from_dict,
            "mar": MarConfig.from_dict,
            "cluster": ClusterConfig.from_dict,
            "sample": SampleConfig.from_dict,
        }
        setattr(config, kind, parsers[kind](section))
        return config

    @property
    def active(self) -> Any:
        return getattr(self, self.kind)


@dataclass
class MetricsConfig:
    """Evaluation settings."""
    nrmse_norm: str = "range"
    ssim_window: int = 7

    @classmethod
    def from_dict(cls, data: dict) -> MetricsConfig:
        config = cls(
            nrmse_norm=data.get("nrmse_norm", "range"),
            ssim_window=data.get("ssim_window", 7),
        )
        if config.nrmse_norm not in NRMSE_NORMS:
            raise ConfigError(f"metrics.nrmse_norm must be one of {NRMSE_NORMS}")
        return config


@dataclass
class CacheConfig:
    """Response cache settings."""
    directory: str = "~/.gridcast/cache"

    @classmethod
    def from_dict(cls, data: dict) -> CacheConfig:
        return cls(directory=data.get("directory", "~/.gridcast/cache"))

    @property
    def cache_path(self) -> Path:
        return resolve_cache_dir(self.directory)


@dataclass
class RunConfig:
    """Top-level run configuration."""
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    fetch: FetchConfig = field(default_factory=FetchConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    horizon: int = 7
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        return cls(
            dataset=DatasetConfig.from_dict(data.get("dataset", {})),
            fetch=FetchConfig.from_dict(data.get("fetch", {})),
            split=SplitConfig.from_dict(data.get("split", {})),
            model=ModelConfig.from_dict(data.get("model", {})),
            metrics=MetricsConfig.from_dict(data.get("metrics", {})),
            cache=CacheConfig.from_dict(data.get("cache", {})),
            horizon=data.get("horizon", 7),
            output_dir=data.get("output_dir", "runs"),
            seed=data.get("seed", 0),
        )

    @classmethod
    def from_yaml(cls, path: str | Path) -> RunConfig:
        """Load config from YAML file with env var expansion."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path) as f:
                raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Invalid YAML in {path}: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"Config file {path} must hold a mapping")
        expanded = _expand_env_vars(raw)
        try:
            return cls.from_dict(expanded)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Invalid config in {path}: {exc}") from exc

    @classmethod
    def default(cls) -> RunConfig:
        """Create config with all defaults."""
        return cls()

    def with_overrides(
        self,
        seed: int | None = None,
        output_dir: str | None = None,
        horizon: int | None = None,
        rank: int | None = None,
        ridge: float | None = None,
    ) -> RunConfig:
        """Copy with command-line flags applied (flags > config > defaults)."""
        config = copy.deepcopy(self)
        if seed is not None:
            config.seed = seed
            for section in (config.model.mar, config.model.cluster, config.model.sample):
                section.seed = seed
        if output_dir is not None:
            config.output_dir = output_dir
        if horizon is not None:
            if horizon < 1:
                raise ConfigError(f"horizon must be >= 1, got {horizon}")
            config.horizon = horizon
        if rank is not None:
            config.model.ttdmd.rank = rank
            config.model.dmd.rank = rank
        if ridge is not None:
            config.model.mar.ridge = ridge
        return config

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Stable hash of the effective configuration."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return sha256_bytes(canonical.encode("utf-8"))

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir).expanduser()


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load configuration from file or use defaults.

    Resolution order:
    1. Explicit path argument
    2. GRIDCAST_CONFIG environment variable
    3. ./gridcast.yaml
    4. ~/.gridcast/config.yaml
    5. Default values
    """
    if path:
        return RunConfig.from_yaml(path)

    env_path = os.environ.get("GRIDCAST_CONFIG")
    if env_path:
        return RunConfig.from_yaml(env_path)

    local_path = Path("gridcast.yaml")
    if local_path.exists():
        return RunConfig.from_yaml(local_path)

    home_path = Path.home() / ".gridcast" / "config.yaml"
    if home_path.exists():
        return RunConfig.from_yaml(home_path)

    return RunConfig.default()
