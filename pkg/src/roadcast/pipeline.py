"""File-based pipeline stages.

Each stage reads the outputs of the stages before it from the stage directory
and writes its own outputs there, so the chain can resume from any point::

    raw/       synth        events, weather, poi, nodes, ways CSVs and truth.json
    ingest/    ingest       validated, de-duplicated events plus rejected rows
    augment/   augment      events with closure, weather, POI, daylight, road columns
    features/  features     binary feature store with its JSON sidecar
    tiles/     tiles        one PPM road tile per zone
    models/    train        checkpoints, training histories, loss plots
    eval/      evaluate     metrics (CSV, text, PNG) and test-window predictions
    predict/   predict      per-zone forecast for one interval
    stats/     stats        dataset distributions (CSV, JSON, PNG)
    map/       export-map   GeoJSON hexagon map and its PNG rendering
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from roadcast import plots
from roadcast.augment import augment_events, read_augmented, write_augmented
from roadcast.augment.poi import PoiIndex, read_pois
from roadcast.augment.roads import RoadNetwork, read_nodes, read_ways
from roadcast.augment.weather import WeatherIndex, read_weather
from roadcast.config import RunConfig
from roadcast.evaluation import (
    Dataset, compute_dataset_stats, compute_metrics, export_geojson, metrics_csv, metrics_text,
    spatial_parts, stats_tables, temporal_parts,
)
from roadcast.features import (
    HISTORY, NormStats, build_feature_table, load_feature_store, normalize, save_feature_store,
    temporal_split, window_arrays,
)
from roadcast.grid import GridConfig, HexCell
from roadcast.ingest import dedup, parse_events, write_events
from roadcast.models import (
    WindowSet, build_model, load_checkpoint, predict, read_manifest, save_checkpoint, train,
)
from roadcast.synth import generate, write_corpus
from roadcast.tiles import coverage_warning, load_tile, render_tile, save_tile, tile_filename

log = logging.getLogger(__name__)


class MissingInputError(FileNotFoundError):
    """An upstream artifact a stage depends on does not exist."""


def require(*paths) -> None:
    for p in paths:
        if not Path(p).exists():
            raise MissingInputError(f"missing upstream file: {p}")


def _stage(cfg: RunConfig, name: str) -> Path:
    d = cfg.stage_dir / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---- data stages ------------------------------------------------------------------

def run_synth(cfg: RunConfig) -> dict:
    corpus = generate(cfg.synth_config())
    paths = write_corpus(corpus, _stage(cfg, "raw"))
    log.info("synth: %d events, %d weather rows, %d POIs, %d ways; planted rate %.4f",
             len(corpus.events), len(corpus.weather), len(corpus.pois), len(corpus.ways),
             corpus.planned.mean())
    return {k: str(v) for k, v in paths.items()}


def run_ingest(cfg: RunConfig) -> dict:
    src = cfg.input_path("events")
    require(src)
    with open(src, newline="", encoding="utf-8") as f:
        events, errors = parse_events(f)
    kept = dedup(events, cfg.dedup_radius_m, cfg.dedup_window_s)
    out = _stage(cfg, "ingest")
    extra = sorted({k for e in kept for k in e.extra})
    with open(out / "events.csv", "w", newline="", encoding="utf-8") as f:
        write_events(kept, f, extra_columns=extra)
    _write_rows(out / "rejects.csv", ["line", "reason"], [[e.line, e.reason] for e in errors])
    summary = {"source": str(src), "valid": len(events), "rejected": len(errors),
               "duplicates_removed": len(events) - len(kept), "kept": len(kept)}
    _write_json(out / "summary.json", summary)
    for e in errors[:20]:
        log.warning("%s line %d: %s", src, e.line, e.reason)
    log.info("ingest: %d valid, %d rejected, %d duplicates removed",
             len(events), len(errors), summary["duplicates_removed"])
    return summary


def _read(path, reader):
    with open(path, newline="", encoding="utf-8") as f:
        return reader(f)


def load_network(cfg: RunConfig) -> RoadNetwork:
    require(cfg.input_path("nodes"), cfg.input_path("ways"))
    return RoadNetwork(_read(cfg.input_path("nodes"), read_nodes), _read(cfg.input_path("ways"), read_ways))


def run_augment(cfg: RunConfig) -> int:
    src = cfg.stage_dir / "ingest" / "events.csv"
    require(src, cfg.input_path("weather"), cfg.input_path("poi"))
    events, errors = _read(src, parse_events)
    if errors:
        raise ValueError(f"{src}: {len(errors)} invalid rows; rerun ingest")
    weather = WeatherIndex(_read(cfg.input_path("weather"), read_weather))
    pois = PoiIndex(_read(cfg.input_path("poi"), read_pois))
    augmented = augment_events(events, weather, pois, load_network(cfg), tau=cfg.tau_m)
    out = _stage(cfg, "augment")
    with open(out / "events.csv", "w", newline="", encoding="utf-8") as f:
        write_augmented(augmented, f)
    log.info("augment: %d events", len(augmented))
    return len(augmented)


def _augmented(cfg: RunConfig):
    src = cfg.stage_dir / "augment" / "events.csv"
    require(src)
    return _read(src, read_augmented)


STORE = Path("features") / "store.bin"


def run_features(cfg: RunConfig) -> dict:
    events = _augmented(cfg)
    require(cfg.input_path("poi"))
    pois = _read(cfg.input_path("poi"), read_pois)
    table = build_feature_table(events, pois, cfg.grid, n_intervals=cfg.n_intervals)
    seq, _, _, targets = window_arrays(table)
    train_idx = temporal_split(targets, cfg.grid)["train"] if len(targets) else []
    norm = NormStats.fit(seq[train_idx]) if len(train_idx) else None
    _stage(cfg, "features")
    save_feature_store(table, cfg.stage_dir / STORE, cfg.grid, norm)
    log.info("features: %d zones x %d intervals, positive rate %.4f",
             len(table.cells), table.n_intervals, float(table.labels.mean()) if table.labels.size else 0.0)
    return {"cells": len(table.cells), "intervals": table.n_intervals,
            "positive_rate": float(table.labels.mean()) if table.labels.size else 0.0}


def load_store(cfg: RunConfig):
    require(cfg.stage_dir / STORE, (cfg.stage_dir / STORE).with_suffix(".json"))
    table, sidecar = load_feature_store(cfg.stage_dir / STORE)
    return table, sidecar


def run_tiles(cfg: RunConfig) -> int:
    table, sidecar = load_store(cfg)
    network = load_network(cfg)
    grid = GridConfig.from_dict(sidecar["grid"])
    warning = coverage_warning(grid)
    if warning:
        log.warning(warning)
    out = _stage(cfg, "tiles")
    for cell in table.cells:
        save_tile(render_tile(cell, network, grid, size=cfg.tile_size), out / tile_filename(cell))
    _write_json(out / "index.json", {"tile_size": cfg.tile_size,
                                     "cells": [c.id for c in table.cells]})
    log.info("tiles: %d tiles at %dx%d", len(table.cells), cfg.tile_size, cfg.tile_size)
    return len(table.cells)


def load_tiles(cfg: RunConfig, cells: list[HexCell]) -> np.ndarray:
    paths = [cfg.stage_dir / "tiles" / tile_filename(c) for c in cells]
    require(*paths)
    tiles = [load_tile(p) for p in paths]
    sizes = {(t.width, t.height) for t in tiles}
    if sizes != {(cfg.tile_size, cfg.tile_size)}:
        raise ValueError(f"tiles are {sorted(sizes)}, config expects {cfg.tile_size}; rerun tiles")
    return np.stack([t.as_float() for t in tiles])


def load_dataset(cfg: RunConfig) -> Dataset:
    table, sidecar = load_store(cfg)
    return Dataset(table, load_tiles(cfg, table.cells), GridConfig.from_dict(sidecar["grid"]))


def scenario_parts(cfg: RunConfig, ds: Dataset) -> tuple[dict, dict | None]:
    if cfg.scenario == "temporal":
        return temporal_parts(ds), None
    parts, zones = spatial_parts(ds, cfg.seed)
    return parts, {k: [c.id for c in v] for k, v in zones.items()}


# ---- model stages -----------------------------------------------------------------

def checkpoint_path(cfg: RunConfig, kind: str) -> Path:
    return cfg.stage_dir / "models" / f"{kind}.ckpt"


def run_train(cfg: RunConfig, kinds=None) -> dict:
    ds = load_dataset(cfg)
    parts, zones = scenario_parts(cfg, ds)
    for name, idx in parts.items():
        if len(idx) == 0:
            raise ValueError(f"{cfg.scenario} split {name!r} is empty")
    sets, norm = ds.splits(parts)
    out = _stage(cfg, "models")
    _write_json(out / "norm.json", norm.to_dict())
    if zones is not None:
        _write_json(out / "zones.json", zones)
    summary = {}
    for kind in kinds or cfg.models:
        tc = cfg.train_config(kind)
        model = build_model(kind, seed=tc.seed, drcp_config=cfg.drcp_config(), l2=tc.l2)
        model, history = train(model, sets["train"], sets["val"], tc)
        save_checkpoint(model, checkpoint_path(cfg, kind), norm_stats_ref="norm.json")
        _write_json(out / f"{kind}_history.json", history)
        plots.plot_history(history, out / f"{kind}_loss.png", title=f"{kind} training loss")
        summary[kind] = {"best_epoch": history["best_epoch"], "best_val_loss": history["best_val_loss"],
                         "epochs": len(history["epochs"])}
    return summary


def _load_model(cfg: RunConfig, kind: str):
    path = checkpoint_path(cfg, kind)
    require(path)
    model = load_checkpoint(path, expected_kind=kind)
    manifest, _ = read_manifest(path)
    norm_path = path.parent / (manifest.get("norm_stats") or "norm.json")
    require(norm_path)
    return model, NormStats.from_dict(json.loads(norm_path.read_text()))


def run_evaluate(cfg: RunConfig) -> dict:
    ds = load_dataset(cfg)
    parts, zones = scenario_parts(cfg, ds)
    test_idx = parts["test"]
    if len(test_idx) == 0:
        raise ValueError(f"{cfg.scenario} test split is empty")
    table, columns = {}, {}
    for kind in cfg.models:
        model, norm = _load_model(cfg, kind)
        data = ds.window_set(test_idx, norm)
        probs, _ = predict(model, data, cfg.threshold)
        table[kind] = compute_metrics(probs, data.labels, cfg.threshold, average=cfg.average)
        columns[kind] = probs
    out = _stage(cfg, "eval")
    (out / "metrics.csv").write_text(metrics_csv(table))
    (out / "metrics.txt").write_text(metrics_text(table))
    plots.plot_metrics(table, out / "metrics.png")
    rows = []
    for j, i in enumerate(test_idx):
        cell = ds.table.cells[ds.cell_index[i]]
        rows.append([cell.id, int(ds.targets[i]), int(ds.labels[i])]
                    + [f"{float(columns[k][j]):.6f}" for k in cfg.models])
    _write_rows(out / "predictions.csv", ["cell_id", "interval", "actual"] + [f"p_{k}" for k in cfg.models],
                rows)
    if zones is not None:
        _write_json(out / "zones.json", zones)
    log.info("evaluate (%s):\n%s", cfg.scenario, metrics_text(table))
    return table


def forecast(cfg: RunConfig, interval: int | None = None):
    """Probabilities for every zone at ``interval`` (default: the one after the last)."""
    table, sidecar = load_store(cfg)
    model, norm = _load_model(cfg, cfg.predict_model)
    first, n_t = table.first_interval, table.n_intervals
    if interval is None:
        interval = cfg.predict_interval if cfg.predict_interval is not None else first + n_t
    k = interval - first
    if not HISTORY <= k <= n_t:
        raise ValueError(f"interval {interval} needs history inside [{first}, {first + n_t}); "
                         f"valid range is {first + HISTORY}..{first + n_t}")
    seq = normalize(norm, table.values[:, k - HISTORY:k]).astype(np.float32)
    tiles = load_tiles(cfg, table.cells)
    data = WindowSet(seq=seq, tiles=tiles, tile_index=np.arange(len(table.cells)),
                     labels=np.zeros(len(table.cells), dtype=np.float32), cells=table.cells,
                     targets=np.full(len(table.cells), interval))
    probs, labels = predict(model, data, cfg.threshold)
    actual = table.labels[:, k] if k < n_t else None
    return table.cells, interval, probs, labels, actual, GridConfig.from_dict(sidecar["grid"])


def run_predict(cfg: RunConfig, interval: int | None = None) -> Path:
    cells, interval, probs, labels, actual, _ = forecast(cfg, interval)
    out = _stage(cfg, "predict")
    rows = [[c.id, interval, f"{float(p):.6f}", int(y), "" if actual is None else int(actual[i])]
            for i, (c, p, y) in enumerate(zip(cells, probs, labels))]
    _write_rows(out / "predictions.csv", ["cell_id", "interval", "probability", "predicted", "actual"], rows)
    log.info("predict: interval %d, %d of %d zones flagged", interval, int(labels.sum()), len(cells))
    return out / "predictions.csv"


def run_export_map(cfg: RunConfig) -> Path:
    src = cfg.stage_dir / "predict" / "predictions.csv"
    require(src)
    _, sidecar = load_store(cfg)
    grid = GridConfig.from_dict(sidecar["grid"])
    with open(src, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{src} holds no predictions")
    intervals = {int(r["interval"]) for r in rows}
    if len(intervals) != 1:
        raise ValueError(f"{src} mixes intervals {sorted(intervals)}")
    interval = intervals.pop()
    cells = [HexCell.parse(r["cell_id"]) for r in rows]
    predicted = {c: int(r["predicted"]) for c, r in zip(cells, rows)}
    actual = None
    if all(r["actual"] != "" for r in rows):
        actual = {c: int(r["actual"]) for c, r in zip(cells, rows)}
    out = _stage(cfg, "map")
    path = out / "predictions.geojson"
    path.write_text(export_geojson(cells, interval, predicted, actual, grid))
    plots.plot_prediction_map(cells, predicted, grid, out / "predictions.png",
                              title=f"Predicted construction, interval {interval}")
    return path


def run_stats(cfg: RunConfig) -> dict:
    stats = compute_dataset_stats(_augmented(cfg))
    out = _stage(cfg, "stats")
    headers = {"monthly": ["month", "start", "end"]}
    for name, rows in stats_tables(stats).items():
        _write_rows(out / f"{name}.csv", headers.get(name, ["key", "count", "percent"]), rows)
    _write_json(out / "stats.json", stats.to_dict())
    plots.plot_stats(stats, out)
    log.info("stats: %d events, long-term share %.3f", stats.total, stats.long_term_share)
    return stats.to_dict()
