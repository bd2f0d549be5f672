"""Per-(cell, interval) feature vectors, sample windows, scaling and the train/val/test splits."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from roadcast.augment import AugmentedEvent, ClosureType
from roadcast.augment.poi import POI_TAGS
from roadcast.augment.roads import ROAD_CLASSES
from roadcast.grid import GridConfig, HexCell, interval_of, interval_start, locate

WEATHER_EVENTS = (
    "light_rain", "moderate_rain", "heavy_rain", "light_snow", "moderate_snow", "heavy_snow",
    "severe_cold", "severe_storm", "severe_fog", "moderate_fog", "hail", "precipitation_other",
)
ROAD_INFO = ("distance", "avg_speed", "travel_time", "traffic_impacted", "severity")
FEATURE_NAMES = (
    ("temperature", "humidity")
    + WEATHER_EVENTS
    + tuple(f"poi_{t}" for t in POI_TAGS)
    + tuple(f"road_{c}" for c in ROAD_CLASSES)
    + ROAD_INFO
)
N_FEATURES = len(FEATURE_NAMES)  # 59
WEATHER = slice(0, 14)
POI = slice(14, 29)
ROAD_TYPE = slice(29, 54)
ROAD = slice(54, 59)
HISTORY = 10


@dataclass(frozen=True)
class WeatherMapping:
    """Thresholds turning one observation into the twelve weather-event indicators."""

    light_mm: float = 2.5
    moderate_mm: float = 7.6
    severe_cold_f: float = -10.0
    severe_fog_mi: float = 0.5
    moderate_fog_mi: float = 2.0

    def indicators(self, obs) -> np.ndarray:
        out = np.zeros(len(WEATHER_EVENTS))
        if obs is None:
            return out
        cond, mm = obs.condition, obs.precipitation

        def intensity(prefix):
            if mm < self.light_mm:
                return f"light_{prefix}"
            if mm < self.moderate_mm:
                return f"moderate_{prefix}"
            return f"heavy_{prefix}"

        hits = []
        if cond == "rain":
            hits.append(intensity("rain"))
        elif cond == "snow":
            hits.append(intensity("snow"))
        elif cond == "thunderstorm":
            hits.append("severe_storm")
        elif cond == "hail":
            hits.append("hail")
        elif cond == "fog":
            if obs.visibility < self.severe_fog_mi:
                hits.append("severe_fog")
            elif obs.visibility < self.moderate_fog_mi:
                hits.append("moderate_fog")
        elif cond == "clear" and mm > 0:
            hits.append("precipitation_other")
        if obs.temperature <= self.severe_cold_f:
            hits.append("severe_cold")
        for name in hits:
            out[WEATHER_EVENTS.index(name)] = 1.0
        return out


def event_row(ev: AugmentedEvent, mapping: WeatherMapping = WeatherMapping()) -> np.ndarray:
    """Per-event vector for the non-POI blocks (POI block left at zero)."""
    v = np.zeros(N_FEATURES)
    if ev.weather is not None:
        v[0] = ev.weather.temperature
        v[1] = ev.weather.humidity
        v[2:14] = mapping.indicators(ev.weather)
    v[ROAD_TYPE.start + ROAD_CLASSES.index(ev.road_class)] = 1.0
    v[54] = ev.distance or 0.0
    v[55] = ev.avg_speed
    v[56] = ev.travel_time or 0.0
    v[57] = 0.0 if ev.closure == ClosureType.NONE else 1.0
    v[58] = ev.severity
    return v


def aggregate(events, poi_counts, mapping: WeatherMapping = WeatherMapping()) -> tuple[np.ndarray, int]:
    """Feature vector and label of one (cell, interval).

    Non-POI blocks are means over ``events`` (the two weather magnitudes over
    events that carry weather); the POI block is the cell's static counts.
    No events gives zeros outside the POI block and label 0.
    """
    v = np.zeros(N_FEATURES)
    events = list(events)
    if events:
        rows = np.array([event_row(e, mapping) for e in events])
        v[:] = rows.mean(axis=0)
        with_weather = [r for r, e in zip(rows, events) if e.weather is not None]
        v[WEATHER] = np.mean(with_weather, axis=0)[WEATHER] if with_weather else 0.0
    v[POI] = np.asarray(poi_counts, dtype=float)
    return v, int(bool(events))


def poi_counts_by_cell(pois, grid: GridConfig) -> dict[HexCell, np.ndarray]:
    out: dict[HexCell, np.ndarray] = defaultdict(lambda: np.zeros(len(POI_TAGS)))
    for p in pois:
        out[locate(p.lat, p.lng, grid)][POI_TAGS.index(p.tag)] += 1
    return dict(out)


@dataclass
class FeatureTable:
    """Dense (cell, interval) grid of feature vectors and labels.

    ``values`` is (n_cells, n_intervals, 59); ``labels`` is (n_cells, n_intervals).
    Interval ``k`` of the table is absolute interval ``first_interval + k``.
    """

    cells: list[HexCell]
    first_interval: int
    values: np.ndarray
    labels: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1]


def build_feature_table(events: list[AugmentedEvent], pois, grid: GridConfig,
                        cells: list[HexCell] | None = None, n_intervals: int | None = None,
                        mapping: WeatherMapping = WeatherMapping()) -> FeatureTable:
    """Aggregate every (cell, interval) over a contiguous interval range.

    ``cells`` defaults to every cell holding an event or a POI, sorted;
    intervals run from 0 to the last event's interval unless ``n_intervals``
    is given.
    """
    buckets: dict[tuple[HexCell, int], list[AugmentedEvent]] = defaultdict(list)
    for ev in events:
        key = (locate(ev.start_lat, ev.start_lng, grid), interval_of(ev.start_time, grid))
        buckets[key].append(ev)
    poi_counts = poi_counts_by_cell(pois, grid)
    if cells is None:
        cells = sorted({c for c, _ in buckets} | set(poi_counts))
    if n_intervals is None:
        n_intervals = 1 + max((t for _, t in buckets), default=-1)
    zero = np.zeros(len(POI_TAGS))
    values = np.zeros((len(cells), n_intervals, N_FEATURES))
    labels = np.zeros((len(cells), n_intervals), dtype=np.int8)
    for i, cell in enumerate(cells):
        counts = poi_counts.get(cell, zero)
        for t in range(n_intervals):
            values[i, t], labels[i, t] = aggregate(buckets.get((cell, t), ()), counts, mapping)
    return FeatureTable(list(cells), 0, values, labels)


# ---- windows --------------------------------------------------------------------

@dataclass(frozen=True)
class SampleWindow:
    cell: HexCell
    target_interval: int
    history: np.ndarray  # (10, 59) for intervals target-10 .. target-1
    tile_ref: str
    label: int


def build_windows(series: np.ndarray, labels: np.ndarray, cell: HexCell, first_interval: int = 0,
                  history: int = HISTORY) -> list[SampleWindow]:
    """One window per target interval that has ``history`` predecessors in the series."""
    n = len(series)
    out = []
    for k in range(history, n):
        out.append(SampleWindow(
            cell=cell,
            target_interval=first_interval + k,
            history=series[k - history:k],
            tile_ref=f"{cell.q}_{cell.r}",
            label=int(labels[k]),
        ))
    return out


def window_arrays(table: FeatureTable, history: int = HISTORY):
    """All windows of a table as arrays: (seq, labels, cell_index, target_interval)."""
    n_cells, n_t, _ = table.values.shape
    if n_t <= history:
        empty = np.zeros((0, history, N_FEATURES))
        return empty, np.zeros(0, np.int8), np.zeros(0, np.intp), np.zeros(0, np.int64)
    ks = np.arange(history, n_t)
    seq = np.stack([table.values[:, k - history:k] for k in ks], axis=1)  # (cells, windows, 10, 59)
    seq = seq.reshape(-1, history, N_FEATURES)
    labels = table.labels[:, history:].reshape(-1)
    cell_index = np.repeat(np.arange(n_cells), len(ks))
    targets = np.tile(ks + table.first_interval, n_cells)
    return seq, labels, cell_index, targets


# ---- normalization ----------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.max < self.min):
            raise ValueError("NormStats needs max >= min")

    @classmethod
    def fit(cls, vectors: np.ndarray) -> "NormStats":
        v = np.asarray(vectors).reshape(-1, N_FEATURES)
        return cls(v.min(axis=0), v.max(axis=0))

    def to_dict(self) -> dict:
        return {"min": [float(x) for x in self.min], "max": [float(x) for x in self.max]}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


def normalize(stats: NormStats, v: np.ndarray) -> np.ndarray:
    """Per-dimension min-max scaling clamped to [0, 1]; constant dimensions map to 0."""
    v = np.asarray(v, dtype=float)
    span = stats.max - stats.min
    safe = np.where(span > 0, span, 1.0)
    out = np.clip((v - stats.min) / safe, 0.0, 1.0)
    return np.where(span > 0, out, 0.0)


# ---- splits --------------------------------------------------------------------

def _utc(y, m, d):
    return datetime(y, m, d, tzinfo=timezone.utc)


TEMPORAL_RANGES = {
    "train": (_utc(2016, 2, 1), _utc(2019, 12, 31)),
    "val": (_utc(2020, 1, 1), _utc(2020, 5, 31)),
    "test": (_utc(2020, 6, 1), _utc(2020, 12, 31)),
}


def split_of_date(start: datetime) -> str | None:
    day = start.astimezone(timezone.utc).replace(hour=0, minute=0, second=0, microsecond=0)
    for name, (lo, hi) in TEMPORAL_RANGES.items():
        if lo <= day <= hi:
            return name
    return None


def temporal_split(targets, grid: GridConfig) -> dict[str, np.ndarray]:
    """Window indices per split, by the start date of each target interval.

    Targets starting outside every range belong to no split.
    """
    names = [split_of_date(interval_start(int(t), grid)) for t in targets]
    return {s: np.array([i for i, n in enumerate(names) if n == s], dtype=np.intp)
            for s in ("train", "val", "test")}


def split_sizes(n: int, fractions=(0.6, 0.2, 0.2)) -> tuple[int, ...]:
    """Largest-remainder apportionment of ``n`` items; remainder ties go to the earlier part."""
    exact = [n * f for f in fractions]
    sizes = [math.floor(x) for x in exact]
    rest = n - sum(sizes)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:rest]:
        sizes[i] += 1
    return tuple(sizes)


def spatial_split(cells, seed: int) -> dict[str, list]:
    """Random 60/20/20 partition of cells, reproducible under ``seed``."""
    cells = sorted(cells)
    if len(cells) < 5:
        raise ValueError("spatial split needs at least 5 cells")
    n_train, n_val, _ = split_sizes(len(cells))
    order = np.random.default_rng(seed).permutation(len(cells))
    shuffled = [cells[i] for i in order]
    return {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train:n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val:]),
    }


# ---- feature store ------------------------------------------------------------------

RECORD_DTYPE = np.dtype([
    ("q", "<i4"), ("r", "<i4"), ("interval", "<i4"), ("values", "<f4", (N_FEATURES,)), ("label", "u1"),
])


def save_feature_store(table: FeatureTable, path, grid: GridConfig, norm: NormStats | None = None) -> None:
    """Binary records plus a ``.json`` sidecar describing the layout."""
    path = Path(path)
    n_cells, n_t, _ = table.values.shape
    rec = np.zeros(n_cells * n_t, dtype=RECORD_DTYPE)
    rec["q"] = np.repeat([c.q for c in table.cells], n_t)
    rec["r"] = np.repeat([c.r for c in table.cells], n_t)
    rec["interval"] = np.tile(np.arange(n_t) + table.first_interval, n_cells)
    rec["values"] = table.values.reshape(-1, N_FEATURES)
    rec["label"] = table.labels.reshape(-1)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(rec.tobytes())
    sidecar = {
        "record": {"q": "int32", "r": "int32", "interval": "int32",
                   "values": f"float32[{N_FEATURES}]", "label": "uint8"},
        "byte_order": "little",
        "record_size": RECORD_DTYPE.itemsize,
        "feature_names": list(FEATURE_NAMES),
        "cells": [c.id for c in table.cells],
        "first_interval": table.first_interval,
        "n_intervals": n_t,
        "grid": grid.to_dict(),
        "norm_stats": None if norm is None else norm.to_dict(),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def load_feature_store(path) -> tuple[FeatureTable, dict]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    raw = path.read_bytes()
    if len(raw) % RECORD_DTYPE.itemsize:
        raise ValueError(f"{path}: size is not a whole number of records")
    rec = np.frombuffer(raw, dtype=RECORD_DTYPE)
    cells = [HexCell.parse(c) for c in sidecar["cells"]]
    n_t = sidecar["n_intervals"]
    if len(rec) != len(cells) * n_t:
        raise ValueError(f"{path}: record count does not match the sidecar")
    values = rec["values"].astype(np.float64).reshape(len(cells), n_t, N_FEATURES)
    labels = rec["label"].astype(np.int8).reshape(len(cells), n_t)
    return FeatureTable(cells, sidecar["first_interval"], values, labels), sidecar
