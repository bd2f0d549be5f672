"""Metrics, Scenario I/II experiment runners, dataset statistics and GeoJSON maps."""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from roadcast.augment import AugmentedEvent, ClosureType
from roadcast.augment.daylight import SYSTEMS
from roadcast.augment.poi import POI_TAGS
from roadcast.augment.roads import ROAD_CLASSES
from roadcast.features import (
    FeatureTable, NormStats, normalize, spatial_split, temporal_split, window_arrays,
)
from roadcast.grid import GridConfig, HexCell, cell_polygon
from roadcast.models import (
    DrcpConfig, Model, TrainConfig, WindowSet, build_model, predict, train,
)

log = logging.getLogger(__name__)


# ---- metrics --------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    return Metrics(
        accuracy=_ratio(tp + tn, tp + fp + tn + fn),
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def compute_metrics(probs, labels, threshold: float = 0.5, average: str = "binary") -> Metrics:
    """Confusion counts and scores with class 1 as positive.

    ``average="macro"`` reports precision/recall/F1 as the mean over both
    classes; the confusion counts stay those of the positive class.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels).astype(int)
    if probs.shape != labels.shape:
        raise ValueError("probabilities and labels differ in length")
    if probs.size == 0:
        raise ValueError("metrics need at least one sample")
    pred = probs >= threshold
    truth = labels == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    tn = int(np.sum(~pred & ~truth))
    fn = int(np.sum(~pred & truth))
    m = metrics_from_counts(tp, fp, tn, fn)
    if average == "binary":
        return m
    if average != "macro":
        raise ValueError(f"unknown average {average!r}")
    neg = metrics_from_counts(tn, fn, tp, fp)
    return Metrics(
        accuracy=m.accuracy,
        precision=(m.precision + neg.precision) / 2,
        recall=(m.recall + neg.recall) / 2,
        f1=(m.f1 + neg.f1) / 2,
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


METRIC_COLUMNS = ("model", "f1", "accuracy", "precision", "recall", "tp", "fp", "tn", "fn")


def metrics_rows(table: dict[str, Metrics]) -> list[list]:
    rows = []
    for name, m in table.items():
        rows.append([name, f"{m.f1:.4f}", f"{m.accuracy:.4f}", f"{m.precision:.4f}",
                     f"{m.recall:.4f}", m.tp, m.fp, m.tn, m.fn])
    return rows


def metrics_csv(table: dict[str, Metrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    w.writerows(metrics_rows(table))
    return buf.getvalue()


def metrics_text(table: dict[str, Metrics]) -> str:
    rows = [list(METRIC_COLUMNS)] + [[str(c) for c in r] for r in metrics_rows(table)]
    widths = [max(len(r[i]) for r in rows) for i in range(len(METRIC_COLUMNS))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    return "\n".join(lines) + "\n"


# ---- datasets & scenarios ------------------------------------------------------------

@dataclass
class Dataset:
    """Feature table plus one float tile per table cell (same order)."""

    table: FeatureTable
    tiles: np.ndarray  # (n_cells, S, S, 3) in [0, 1]
    grid: GridConfig

    def __post_init__(self):
        if len(self.tiles) != len(self.table.cells):
            raise ValueError("need exactly one tile per cell")
        seq, labels, cell_index, targets = window_arrays(self.table)
        self.seq = seq
        self.labels = labels
        self.cell_index = cell_index
        self.targets = targets

    def window_set(self, idx, norm: NormStats) -> WindowSet:
        idx = np.asarray(idx, dtype=np.intp)
        return WindowSet(
            seq=normalize(norm, self.seq[idx]).astype(np.float32),
            tiles=self.tiles,
            tile_index=self.cell_index[idx],
            labels=self.labels[idx].astype(np.float32),
            cells=[self.table.cells[i] for i in self.cell_index[idx]],
            targets=self.targets[idx],
        )

    def splits(self, parts: dict[str, np.ndarray]) -> tuple[dict[str, WindowSet], NormStats]:
        norm = NormStats.fit(self.seq[parts["train"]])
        return {k: self.window_set(v, norm) for k, v in parts.items()}, norm


def temporal_parts(ds: Dataset) -> dict[str, np.ndarray]:
    return temporal_split(ds.targets, ds.grid)


def spatial_parts(ds: Dataset, seed: int) -> tuple[dict[str, np.ndarray], dict[str, list]]:
    zones = spatial_split(ds.table.cells, seed)
    pos = {c: i for i, c in enumerate(ds.table.cells)}
    parts = {}
    for name, cells in zones.items():
        member = np.zeros(len(ds.table.cells), dtype=bool)
        member[[pos[c] for c in cells]] = True
        parts[name] = np.flatnonzero(member[ds.cell_index])
    return parts, zones


@dataclass
class RunResult:
    model: Model
    history: dict
    metrics: Metrics
    probs: np.ndarray
    norm: NormStats


def fit_and_test(kind: str, sets: dict[str, WindowSet], norm: NormStats, train_config: TrainConfig,
                 drcp_config: DrcpConfig | None = None, threshold: float = 0.5) -> RunResult:
    model = build_model(kind, seed=train_config.seed, drcp_config=drcp_config, l2=train_config.l2)
    model, history = train(model, sets["train"], sets["val"], train_config)
    probs, _ = predict(model, sets["test"], threshold)
    metrics = compute_metrics(probs, sets["test"].labels, threshold)
    log.info("%s test f1 %.4f accuracy %.4f", kind, metrics.f1, metrics.accuracy)
    return RunResult(model, history, metrics, probs, norm)


def run_scenario1(ds: Dataset, kinds=("drcp", "lr", "mlp"), train_config: TrainConfig = TrainConfig(),
                  drcp_config: DrcpConfig | None = None, train_configs: dict | None = None,
                  threshold: float = 0.5) -> dict[str, RunResult]:
    """Train each model on the temporal train split, select on val, score the test split."""
    sets, norm = ds.splits(temporal_parts(ds))
    for name, s in sets.items():
        if len(s) == 0:
            raise ValueError(f"temporal split {name!r} is empty")
    out = {}
    for kind in kinds:
        cfg = (train_configs or {}).get(kind, train_config)
        out[kind] = fit_and_test(kind, sets, norm, cfg, drcp_config, threshold)
    return out


def run_scenario2(ds: Dataset, seed: int, kind: str = "drcp", train_config: TrainConfig = TrainConfig(),
                  drcp_config: DrcpConfig | None = None, threshold: float = 0.5):
    """Train on 60% of zones, select on 20%, score the windows of the held-out 20%."""
    if len(ds.table.cells) < 5:
        raise ValueError("scenario II needs at least 5 zones")
    parts, zones = spatial_parts(ds, seed)
    sets, norm = ds.splits(parts)
    return fit_and_test(kind, sets, norm, train_config, drcp_config, threshold), zones


# ---- dataset statistics ----------------------------------------------------------------

DURATION_BUCKETS = ("lt_24h", "1d_to_15d", "ge_15d")
DURATION_BIN_EDGES_H = (0, 1, 2, 4, 8, 24, 72, 168, 360, 720)
LONG_TERM_HOURS = 15 * 24


def duration_bucket(hours: float) -> str:
    if hours < 24:
        return "lt_24h"
    if hours < LONG_TERM_HOURS:
        return "1d_to_15d"
    return "ge_15d"


def _fine_bin_labels() -> list[str]:
    e = DURATION_BIN_EDGES_H
    return [f"{e[i]}-{e[i + 1]}h" for i in range(len(e) - 1)] + [f">={e[-1]}h"]


@dataclass
class DatasetStats:
    total: int
    monthly_start: list[int]
    monthly_end: list[int]
    closure_counts: dict[str, int]
    closure_by_source: dict[str, dict[str, int]]
    road_class_counts: dict[str, int]
    poi_counts: dict[str, int]
    duration_buckets: dict[str, int]
    duration_bins: dict[str, int]
    long_term_share: float
    daylight_day_counts: dict[str, int]
    state_counts: dict[str, int]
    city_counts: dict[str, int]

    def shares(self, counts: dict[str, int]) -> dict[str, float]:
        return {k: 100.0 * v / self.total if self.total else 0.0 for k, v in counts.items()}

    def to_dict(self) -> dict:
        return asdict(self)


def compute_dataset_stats(events: list[AugmentedEvent]) -> DatasetStats:
    monthly_start = [0] * 12
    monthly_end = [0] * 12
    closure = Counter({c.value: 0 for c in ClosureType})
    by_source: dict[str, Counter] = {}
    roads = Counter({c: 0 for c in ROAD_CLASSES})
    pois = Counter({t: 0 for t in POI_TAGS})
    buckets = Counter({b: 0 for b in DURATION_BUCKETS})
    labels = _fine_bin_labels()
    bins = Counter({b: 0 for b in labels})
    day = Counter({s: 0 for s in SYSTEMS})
    states: Counter = Counter()
    cities: Counter = Counter()
    with_duration = 0
    long_term = 0
    for a in events:
        e = a.event
        monthly_start[e.start_time.month - 1] += 1
        closure[a.closure.value] += 1
        by_source.setdefault(e.source, Counter({c.value: 0 for c in ClosureType}))[a.closure.value] += 1
        roads[a.road_class] += 1
        for tag, flag in zip(POI_TAGS, a.poi_flags):
            pois[tag] += bool(flag)
        for system, flag in zip(SYSTEMS, a.daylight):
            day[system] += bool(flag)
        if e.end_time is not None:
            monthly_end[e.end_time.month - 1] += 1
            hours = (e.end_time - e.start_time).total_seconds() / 3600.0
            with_duration += 1
            buckets[duration_bucket(hours)] += 1
            long_term += hours >= LONG_TERM_HOURS
            k = int(np.searchsorted(DURATION_BIN_EDGES_H, hours, side="right")) - 1
            bins[labels[k]] += 1
        if e.extra.get("state"):
            states[e.extra["state"]] += 1
        if e.extra.get("city"):
            cities[e.extra["city"]] += 1
    return DatasetStats(
        total=len(events),
        monthly_start=monthly_start,
        monthly_end=monthly_end,
        closure_counts=dict(closure),
        closure_by_source={k: dict(v) for k, v in sorted(by_source.items())},
        road_class_counts=dict(roads),
        poi_counts=dict(pois),
        duration_buckets=dict(buckets),
        duration_bins=dict(bins),
        long_term_share=long_term / with_duration if with_duration else 0.0,
        daylight_day_counts=dict(day),
        state_counts=dict(sorted(states.items())),
        city_counts=dict(sorted(cities.items())),
    )


def stats_tables(stats: DatasetStats) -> dict[str, list[list]]:
    """Each distribution as rows of (key, count, percent-of-events)."""
    months = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]

    def rows(counts: dict) -> list[list]:
        return [[k, v, f"{100.0 * v / stats.total:.2f}" if stats.total else "0.00"] for k, v in counts.items()]

    return {
        "monthly": [[m, s, e] for m, s, e in zip(months, stats.monthly_start, stats.monthly_end)],
        "closure": rows(stats.closure_counts),
        "road_class": rows(stats.road_class_counts),
        "poi": rows(stats.poi_counts),
        "duration": rows(stats.duration_buckets) + rows(stats.duration_bins),
        "daylight": rows(stats.daylight_day_counts),
        "states": rows(stats.state_counts),
        "cities": rows(stats.city_counts),
    }


# ---- GeoJSON ----------------------------------------------------------------------

def export_geojson(cells: list[HexCell], interval: int, predicted: dict, actual: dict | None,
                   grid: GridConfig) -> str:
    """FeatureCollection of zone hexagons coloured by predicted label (red = construction)."""
    features = []
    for cell in cells:
        if cell not in predicted:
            raise KeyError(f"no prediction for cell {cell.id}")
        ring = [[lng, lat] for lat, lng in cell_polygon(cell, grid)]
        ring.append(ring[0])
        pred = int(predicted[cell])
        act = None if actual is None or actual.get(cell) is None else int(actual[cell])
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {
                "cell_id": cell.id,
                "interval_index": int(interval),
                "predicted": pred,
                "actual": act,
                "color": "red" if pred else "green",
            },
        })
    return json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n"


def write_metrics(table: dict[str, Metrics], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(metrics_csv(table))
    (out_dir / "metrics.txt").write_text(metrics_text(table))
