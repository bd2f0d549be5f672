"""Run configuration shared by every pipeline stage.

The JSON schema mirrors :class:`RunConfig`; every key is optional::

    {
      "seed": 7,
      "stage_dir": "stage",
      "paths": {"events": "...", "weather": "...", "poi": "...", "nodes": "...", "ways": "..."},
      "grid": {"origin_lat": 39.9612, "origin_lng": -82.9988, "hex_area_km2": 5.16,
               "epoch_start": "2016-02-01T00:00:00+00:00", "interval_days": 15},
      "tau_m": 30.0,
      "dedup": {"radius_m": 250.0, "window_s": 1800.0},
      "n_intervals": null,
      "tile_size": 64,
      "models": ["drcp", "lr", "mlp"],
      "scenario": "temporal",
      "threshold": 0.5,
      "average": "binary",
      "train": {... TrainConfig fields ...},
      "train_by_model": {"lr": {... TrainConfig overrides ...}},
      "drcp": {... DrcpConfig overrides ...},
      "predict": {"model": "drcp", "interval": null},
      "synth": {... SynthConfig fields except seed ...}
    }

Unset input paths default to the files ``synth`` writes under ``<stage_dir>/raw``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from roadcast.grid import GridConfig
from roadcast.ingest import DEDUP_RADIUS_M, DEDUP_WINDOW_S
from roadcast.augment.poi import POI_TAU_M
from roadcast.models import DrcpConfig, TrainConfig
from roadcast.synth import SynthConfig

INPUTS = {"events": "events.csv", "weather": "weather.csv", "poi": "poi.csv",
          "nodes": "nodes.csv", "ways": "ways.csv"}
MODEL_KINDS = ("drcp", "lr", "mlp")
SCENARIOS = ("temporal", "spatial")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    stage_dir: Path = Path("stage")
    paths: dict = field(default_factory=dict)
    grid: GridConfig = field(default_factory=GridConfig)
    tau_m: float = POI_TAU_M
    dedup_radius_m: float = DEDUP_RADIUS_M
    dedup_window_s: float = DEDUP_WINDOW_S
    n_intervals: int | None = None
    tile_size: int = 64
    models: tuple[str, ...] = MODEL_KINDS
    scenario: str = "temporal"
    threshold: float = 0.5
    average: str = "binary"
    train: dict = field(default_factory=dict)
    train_by_model: dict = field(default_factory=dict)
    drcp: dict = field(default_factory=dict)
    predict_model: str = "drcp"
    predict_interval: int | None = None
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.paths) - set(INPUTS)
        if unknown:
            raise ConfigError(f"unknown input paths: {sorted(unknown)}")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad or not self.models:
            raise ConfigError(f"models must be a non-empty subset of {MODEL_KINDS}, got {list(self.models)}")
        if self.predict_model not in MODEL_KINDS:
            raise ConfigError(f"unknown predict model {self.predict_model!r}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.average not in ("binary", "macro"):
            raise ConfigError("average must be 'binary' or 'macro'")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie strictly between 0 and 1")
        if self.tile_size < 1:
            raise ConfigError("tile_size must be positive")
        # build the nested configs once so bad values fail at load time
        try:
            for kind in MODEL_KINDS:
                self.train_config(kind)
            self.drcp_config()
            self.synth_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # ---- derived configs ---------------------------------------------------------

    def input_path(self, name: str) -> Path:
        if name in self.paths:
            return Path(self.paths[name])
        return self.stage_dir / "raw" / INPUTS[name]

    def train_config(self, kind: str) -> TrainConfig:
        d = {**self.train, **self.train_by_model.get(kind, {}), "seed": self.seed}
        return TrainConfig.from_dict(d)

    def drcp_config(self) -> DrcpConfig:
        return DrcpConfig.from_dict({**self.drcp, "tile_size": self.tile_size})

    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_dict({**self.synth, "seed": self.seed,
                                      "grid": self.grid.to_dict()})

    # ---- (de)serialization -------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)} | {"dedup", "predict"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key in ("seed", "tau_m", "n_intervals", "tile_size", "scenario", "threshold",
                    "average", "paths", "train", "train_by_model", "drcp", "synth"):
            if key in d:
                kw[key] = d[key]
        if "stage_dir" in d:
            kw["stage_dir"] = Path(d["stage_dir"])
        if "models" in d:
            kw["models"] = tuple(d["models"])
        if "grid" in d:
            try:
                kw["grid"] = GridConfig.from_dict(d["grid"])
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"bad grid config: {exc}") from exc
        dedup = d.get("dedup", {})
        if "radius_m" in dedup:
            kw["dedup_radius_m"] = float(dedup["radius_m"])
        if "window_s" in dedup:
            kw["dedup_window_s"] = float(dedup["window_s"])
        predict = d.get("predict", {})
        if "model" in predict:
            kw["predict_model"] = predict["model"]
        if "interval" in predict:
            kw["predict_interval"] = predict["interval"]
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except ValueError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})
