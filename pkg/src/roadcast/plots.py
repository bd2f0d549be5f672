"""Matplotlib figures written next to the CSV reports (Agg backend, PNG)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402

from roadcast.evaluation import DatasetStats, Metrics  # noqa: E402
from roadcast.grid import GridConfig, HexCell, cell_polygon  # noqa: E402

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
# fixed metadata keeps the PNG bytes stable across runs
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def _bars(ax, labels, values, title, ylabel="events", rotate=False):
    ax.bar(range(len(values)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60 if rotate else 0, ha="right" if rotate else "center",
                       fontsize=8)
    ax.set_title(title)
    ax.set_ylabel(ylabel)


def plot_stats(stats: DatasetStats, out_dir) -> list[Path]:
    """One PNG per distribution of the dataset statistics."""
    out = Path(out_dir)
    paths = []

    fig, ax = plt.subplots(figsize=(8, 4))
    x = range(12)
    ax.bar([i - 0.2 for i in x], stats.monthly_start, width=0.4, label="start")
    ax.bar([i + 0.2 for i in x], stats.monthly_end, width=0.4, label="end")
    ax.set_xticks(list(x))
    ax.set_xticklabels(MONTHS)
    ax.set_title("Monthly distribution")
    ax.set_ylabel("events")
    ax.legend()
    fig.tight_layout()
    paths.append(_save(fig, out / "monthly.png"))

    share_plots = [
        ("closure.png", stats.closure_counts, "Closure type"),
        ("poi.png", stats.poi_counts, "Nearby POI"),
        ("daylight.png", stats.daylight_day_counts, "Daytime share by twilight system"),
    ]
    for name, counts, title in share_plots:
        fig, ax = plt.subplots(figsize=(8, 4))
        _bars(ax, list(counts), list(stats.shares(counts).values()), title, "% of events",
              rotate=len(counts) > 6)
        fig.tight_layout()
        paths.append(_save(fig, out / name))

    nonzero = {k: v for k, v in stats.road_class_counts.items() if v}
    fig, ax = plt.subplots(figsize=(8, 4))
    _bars(ax, list(nonzero), list(stats.shares(nonzero).values()), "Road class", "% of events",
          rotate=True)
    fig.tight_layout()
    paths.append(_save(fig, out / "road_class.png"))

    fig, ax = plt.subplots(figsize=(8, 4))
    _bars(ax, list(stats.duration_bins), list(stats.duration_bins.values()),
          f"Duration (long-term share {100 * stats.long_term_share:.1f}%)", rotate=True)
    fig.tight_layout()
    paths.append(_save(fig, out / "duration.png"))
    return paths


def plot_metrics(table: dict[str, Metrics], path) -> Path:
    names = list(table)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = range(len(names))
    ax.bar([i - 0.2 for i in x], [table[n].f1 for n in names], width=0.4, label="F1")
    ax.bar([i + 0.2 for i in x], [table[n].accuracy for n in names], width=0.4, label="accuracy")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1)
    ax.set_title("Test metrics")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_history(history: dict, path, title: str = "") -> Path:
    epochs = history["epochs"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([e["epoch"] for e in epochs], [e["train_loss"] for e in epochs], label="train")
    ax.plot([e["epoch"] for e in epochs], [e["val_loss"] for e in epochs], label="val")
    ax.axvline(history["best_epoch"], color="grey", linestyle=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("weighted BCE")
    ax.set_title(title or "Training loss")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_prediction_map(cells: list[HexCell], predicted: dict, grid: GridConfig, path,
                        title: str = "") -> Path:
    """Hexagons in lng/lat, red where construction is predicted, green elsewhere."""
    polys = [[(lng, lat) for lat, lng in cell_polygon(c, grid)] for c in cells]
    colors = ["#d62728" if predicted[c] else "#2ca02c" for c in cells]
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.add_collection(PolyCollection(polys, facecolors=colors, edgecolors="white", linewidths=0.5))
    ax.autoscale_view()
    ax.set_aspect("equal")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
