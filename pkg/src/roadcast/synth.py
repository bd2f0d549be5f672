"""Desk-scale synthetic corpus with planted construction dynamics.

Every cell is one of three kinds:

* ``corridor``: a motorway crossing the zone; when active, work recurs on a
  three-interval cycle (one busy interval, two quiet ones),
* ``arterial``: a primary road; work recurs on a four-interval cycle (two
  busy, two quiet),
* ``quiet``: residential streets only, with sporadic isolated records.

A scheduled busy interval actually sees work with a probability that grows with
the zone's POI count and follows a yearly seasonal term. A small flip
probability adds label noise everywhere. The label matrix is planned first;
records, weather, POIs and the road network are then emitted to match it.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import timedelta, timezone
from pathlib import Path

import numpy as np

from roadcast.augment.poi import POI_TAGS, PoiRecord, write_pois
from roadcast.augment.roads import RoadNode, RoadWay, write_nodes, write_ways
from roadcast.augment.weather import WeatherObservation, write_weather
from roadcast.grid import GridConfig, HexCell, cell_center, interval_start, project, unproject
from roadcast.ingest import RawEvent, write_events

KINDS = ("corridor", "arterial", "quiet")
CYCLES = {"corridor": (1, 0, 0), "arterial": (1, 1, 0, 0), "quiet": (0,)}
MAIN_ROAD = {"corridor": "motorway", "arterial": "primary", "quiet": "residential"}
LOCAL_OFFSET = timezone(timedelta(hours=-5))

_ROAD_TEXT = [
    "Road closed due to roadwork on {road}",
    "{road} closed between exits because of bridge roadwork",
    "Road closed for construction on {road}",
]
_LANE_TEXT = [
    "Right lane closed due to construction on {road}",
    "Left lane blocked for roadwork on {road}",
    "Two lanes closed on {road} for resurfacing",
    "Reduced to one lane on {road} due to roadwork",
    "Hard shoulder closed on {road}",
]
_PLAIN_TEXT = [
    "Construction on {road}",
    "Roadwork on {road} expect delays",
    "Utility work near {road}",
]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    grid: GridConfig = field(default_factory=GridConfig)
    side: int = 10  # the block is side x side cells
    n_intervals: int = 120
    base_rate: float = 0.25  # target share of positive (cell, interval) labels
    corridor_share: float = 0.5  # share of prone cells that are corridors
    activity: float = 0.88  # mean chance a scheduled busy interval sees work
    poi_effect: float = 0.04  # activity gain per POI standard deviation
    season_amplitude: float = 0.04  # activity swing between summer and winter
    flip: float = 0.02  # label noise
    duplicate_rate: float = 0.01  # share of records also reported by the other source
    extra_events: float = 0.6  # mean number of extra records in a busy interval
    weather_step_hours: int = 3
    n_stations: int = 3

    def __post_init__(self):
        if self.side < 3:
            raise ValueError("side must be at least 3")
        if self.n_intervals < 11:
            raise ValueError("need at least 11 intervals for one window")
        for name in ("base_rate", "corridor_share", "activity", "flip", "duplicate_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def n_cells(self) -> int:
        return self.side * self.side

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "grid" in d:
            d["grid"] = GridConfig.from_dict(d["grid"])
        return cls(**d)


@dataclass
class SynthCorpus:
    config: SynthConfig
    cells: list[HexCell]
    kinds: list[str]
    planned: np.ndarray  # (n_cells, n_intervals) planted labels
    events: list[RawEvent]
    weather: list[WeatherObservation]
    pois: list[PoiRecord]
    nodes: list[RoadNode]
    ways: list[RoadWay]

    def kind_rates(self) -> dict[str, float]:
        kinds = np.array(self.kinds)
        return {k: float(self.planned[kinds == k].mean()) for k in KINDS if (kinds == k).any()}

    def truth(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "planted_rate": float(self.planned.mean()),
            "kind_rates": self.kind_rates(),
            "cells": [{"cell_id": c.id, "kind": k} for c, k in zip(self.cells, self.kinds)],
        }


# ---- label planning -------------------------------------------------------------------

def block_cells(side: int) -> list[HexCell]:
    """A roughly square block of side x side cells around the origin cell."""
    half = side // 2
    cells = []
    for col in range(side):
        q = col - half
        for row in range(side):
            cells.append(HexCell(q, row - half - (q - (q & 1)) // 2))
    return sorted(cells)


def _expected_rate(cfg: SynthConfig, kind: str) -> float:
    cycle = CYCLES[kind]
    busy = sum(cycle) / len(cycle) * cfg.activity
    return busy * (1 - cfg.flip) + (1 - busy) * cfg.flip


def prone_count(cfg: SynthConfig) -> int:
    """Number of prone cells that puts the expected label rate at ``base_rate``."""
    r_quiet = _expected_rate(cfg, "quiet")
    r_prone = (cfg.corridor_share * _expected_rate(cfg, "corridor")
               + (1 - cfg.corridor_share) * _expected_rate(cfg, "arterial"))
    if not r_quiet <= cfg.base_rate <= r_prone:
        raise ValueError(f"base_rate must lie in [{r_quiet:.3f}, {r_prone:.3f}] for this config")
    share = (cfg.base_rate - r_quiet) / (r_prone - r_quiet)
    return int(round(share * cfg.n_cells))


def _season(cfg: SynthConfig, t: int) -> float:
    # +1 at the start of July, -1 at the start of January
    start = interval_start(t, cfg.grid) + timedelta(days=cfg.grid.interval_days / 2)
    day = start.timetuple().tm_yday
    return math.cos(2 * math.pi * (day - 182) / 365.25)


def plan_labels(cfg: SynthConfig, rng: np.random.Generator, kinds: list[str],
                poi_counts: np.ndarray) -> np.ndarray:
    n, T = len(kinds), cfg.n_intervals
    z = (poi_counts - poi_counts.mean()) / (poi_counts.std() or 1.0)
    season = np.array([_season(cfg, t) for t in range(T)])
    labels = np.zeros((n, T), dtype=np.int8)
    for i, kind in enumerate(kinds):
        cycle = np.array(CYCLES[kind])
        phase = rng.integers(len(cycle))
        scheduled = cycle[(np.arange(T) + phase) % len(cycle)]
        p = np.clip(cfg.activity + cfg.poi_effect * z[i] + cfg.season_amplitude * season, 0.0, 1.0)
        active = scheduled & (rng.random(T) < p)
        flips = rng.random(T) < cfg.flip
        labels[i] = np.where(flips, 1 - active, active)
    return labels


# ---- geometry -------------------------------------------------------------------------

class _Builder:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg, self.rng = cfg, rng
        self.nodes: list[RoadNode] = []
        self.ways: list[RoadWay] = []

    def _node(self, x: float, y: float) -> int:
        lat, lng = unproject(x, y, self.cfg.grid)
        node = RoadNode(len(self.nodes) + 1, round(float(lat), 7), round(float(lng), 7))
        self.nodes.append(node)
        return node.node_id

    def way(self, points, road_class: str, maxspeed=None) -> list[int]:
        ids = [self._node(x, y) for x, y in points]
        self.ways.append(RoadWay(len(self.ways) + 1, tuple(ids), road_class, maxspeed))
        return ids

    def cell_roads(self, cell: HexCell, kind: str) -> dict[str, list[int]]:
        """Main road through the centre plus parallel side streets; node ids per role."""
        rng = self.rng
        lat, lng = cell_center(cell, self.cfg.grid)
        cx, cy = (float(v) for v in project(lat, lng, self.cfg.grid))
        theta = rng.uniform(0, math.pi)
        ux, uy = math.cos(theta), math.sin(theta)  # along the main road
        px, py = -uy, ux  # across it

        def line(offset, half, n):
            return [(cx + px * offset + ux * s, cy + py * offset + uy * s)
                    for s in np.linspace(-half, half, n)]

        roles: dict[str, list[int]] = {}
        main = MAIN_ROAD[kind]
        speed = {"motorway": 65.0, "primary": 45.0}.get(main)
        roles["main"] = self.way(line(0.0, 850.0, 9), main,
                                 speed if rng.random() < 0.5 else None)
        side = []
        for sign in (-1.0, 1.0):
            offset = sign * rng.uniform(380.0, 620.0)
            side += self.way(line(offset, rng.uniform(250.0, 450.0), 4), "residential")
        if kind == "quiet":
            side += self.way(line(rng.uniform(-200.0, 200.0), 350.0, 4), "tertiary")
        roles["side"] = side
        return roles


def _jitter(rng, lat: float, lng: float, radius_m: float) -> tuple[float, float]:
    r = radius_m * math.sqrt(rng.random())
    a = rng.uniform(0, 2 * math.pi)
    dlat = r * math.sin(a) / 111_320.0
    dlng = r * math.cos(a) / (111_320.0 * math.cos(math.radians(lat)))
    return round(lat + dlat, 7), round(lng + dlng, 7)


# ---- generation -----------------------------------------------------------------------

def generate(cfg: SynthConfig = SynthConfig()) -> SynthCorpus:
    rng = np.random.default_rng(cfg.seed)
    cells = block_cells(cfg.side)
    n_prone = prone_count(cfg)
    n_corridor = int(round(n_prone * cfg.corridor_share))
    kinds_pool = ["corridor"] * n_corridor + ["arterial"] * (n_prone - n_corridor)
    kinds_pool += ["quiet"] * (len(cells) - n_prone)
    kinds = [kinds_pool[i] for i in rng.permutation(len(cells))]

    builder = _Builder(cfg, rng)
    roles = [builder.cell_roads(c, k) for c, k in zip(cells, kinds)]
    node_by_id = {n.node_id: n for n in builder.nodes}

    # POIs sit next to road nodes; prone zones attract more of them
    pois, poi_counts = [], np.zeros(len(cells))
    for i, kind in enumerate(kinds):
        count = 1 + rng.poisson(6.0 if kind != "quiet" else 2.0)
        poi_counts[i] = count
        candidates = roles[i]["main"] + roles[i]["side"]
        for _ in range(count):
            node = node_by_id[candidates[rng.integers(len(candidates))]]
            lat, lng = _jitter(rng, node.lat, node.lng, 25.0)
            pois.append(PoiRecord(lat, lng, POI_TAGS[rng.integers(len(POI_TAGS))]))

    planned = plan_labels(cfg, rng, kinds, poi_counts)
    events = _emit_events(cfg, rng, cells, kinds, roles, node_by_id, planned)
    weather = _emit_weather(cfg, rng, cells)
    return SynthCorpus(cfg, cells, kinds, planned, events, weather, pois,
                       builder.nodes, builder.ways)


def _describe(rng, kind: str, road_name: str) -> str:
    u = rng.random()
    if kind == "quiet":
        pool = _PLAIN_TEXT if u < 0.7 else _LANE_TEXT
    else:
        pool = _ROAD_TEXT if u < 0.3 else _LANE_TEXT if u < 0.75 else _PLAIN_TEXT
    return pool[rng.integers(len(pool))].format(road=road_name)


def _emit_events(cfg, rng, cells, kinds, roles, node_by_id, planned) -> list[RawEvent]:
    span_s = cfg.grid.interval_days * 86400
    events: list[RawEvent] = []
    n_id = 0
    for i, (cell, kind) in enumerate(zip(cells, kinds)):
        road_name = {"corridor": f"I-{70 + 2 * (i % 5)}", "arterial": f"US-{23 + i % 9}",
                     "quiet": f"{['Oak', 'Elm', 'Maple', 'Cedar'][i % 4]} St"}[kind]
        for t in np.flatnonzero(planned[i]):
            start = interval_start(int(t), cfg.grid)
            for _ in range(1 + rng.poisson(cfg.extra_events)):
                on_main = kind != "quiet" and rng.random() < 0.85
                pool = roles[i]["main" if on_main else "side"]
                # interior nodes keep both endpoints on the same way
                k = int(rng.integers(1, len(pool) - 1))
                a, b = node_by_id[pool[k]], node_by_id[pool[k + 1]]
                s_lat, s_lng = _jitter(rng, a.lat, a.lng, 15.0)
                e_lat, e_lng = _jitter(rng, b.lat, b.lng, 15.0)
                begin = start + timedelta(seconds=int(rng.integers(3600, span_s - 3600)))
                hours = float(rng.choice([2, 6, 12, 30, 100, 400], p=[.2, .25, .2, .15, .12, .08]))
                end = begin + timedelta(hours=hours * float(rng.uniform(0.7, 1.3)))
                n_id += 1
                source = "MapQuest" if rng.random() < 0.6 else "Bing"
                ev = RawEvent(
                    id=f"S-{n_id}", source=source, severity=int(rng.integers(1, 5)),
                    start_time=begin.astimezone(LOCAL_OFFSET), start_lat=s_lat, start_lng=s_lng,
                    description=_describe(rng, kind, road_name),
                    end_time=end.astimezone(LOCAL_OFFSET), end_lat=e_lat, end_lng=e_lng,
                    distance=None, extra={"city": "Columbus", "state": "OH"},
                )
                events.append(ev)
                if rng.random() < cfg.duplicate_rate:
                    n_id += 1
                    d_lat, d_lng = _jitter(rng, s_lat, s_lng, 40.0)
                    other = "Bing" if source == "MapQuest" else "MapQuest"
                    events.append(RawEvent(
                        id=f"S-{n_id}", source=other, severity=ev.severity,
                        start_time=ev.start_time + timedelta(minutes=int(rng.integers(1, 10))),
                        start_lat=d_lat, start_lng=d_lng, description="Construction",
                        end_time=ev.end_time, end_lat=e_lat, end_lng=e_lng, distance=None,
                        extra=dict(ev.extra),
                    ))
    return events


def _emit_weather(cfg, rng, cells) -> list[WeatherObservation]:
    lats, lngs = zip(*(cell_center(c, cfg.grid) for c in cells))
    lat0, lat1, lng0, lng1 = min(lats), max(lats), min(lngs), max(lngs)
    stations = []
    for s in range(cfg.n_stations):
        f = (s + 0.5) / cfg.n_stations
        stations.append((f"K{chr(65 + s)}{chr(65 + s)}{chr(65 + s)}",
                         round(float(lat0 + f * (lat1 - lat0)), 5),
                         round(float(lng0 + (1 - f) * (lng1 - lng0)), 5)))
    first = interval_start(0, cfg.grid) - timedelta(days=1)
    last = interval_start(cfg.n_intervals, cfg.grid) + timedelta(days=1)
    steps = int((last - first).total_seconds() // (3600 * cfg.weather_step_hours))
    times = [first + timedelta(hours=cfg.weather_step_hours * k) for k in range(steps)]
    out = []
    dirs = ("N", "NE", "E", "SE", "S", "SW", "W", "NW", "CALM")
    for sid, slat, slng in stations:
        for when in times:
            day = when.timetuple().tm_yday
            seasonal = math.cos(2 * math.pi * (day - 200) / 365.25)
            diurnal = math.cos(2 * math.pi * (when.hour - 20) / 24)  # warmest ~15:00 local
            temp = 52 + 24 * seasonal + 7 * diurnal + rng.normal(0, 5)
            u = rng.random()
            precip = 0.0
            if temp < 32 and u < 0.15:
                cond, precip = "snow", float(rng.exponential(3.0))
            elif u < 0.14:
                cond, precip = "rain", float(rng.exponential(3.0))
            elif u < 0.17:
                cond = "fog"
            elif seasonal > 0.3 and u < 0.20:
                cond, precip = "thunderstorm", float(rng.exponential(6.0))
            elif u < 0.202:
                cond, precip = "hail", float(rng.exponential(2.0))
            else:
                cond = "clear"
            if cond == "clear" and rng.random() < 0.02:
                precip = float(rng.exponential(0.3))
            vis = float(rng.uniform(0.1, 1.8)) if cond == "fog" else float(min(10.0, rng.normal(9, 1.5)))
            wind = max(0.0, float(rng.normal(8, 4)))
            chill = temp - 0.7 * wind if temp < 50 and wind > 3 else None
            out.append(WeatherObservation(
                station_id=sid, station_lat=slat, station_lng=slng, time=when,
                temperature=round(temp, 1), humidity=round(float(np.clip(rng.normal(68, 15), 5, 100)), 1),
                pressure=round(float(rng.normal(29.95, 0.2)), 2), visibility=round(max(vis, 0.0), 1),
                wind_direction=dirs[rng.integers(len(dirs))], wind_speed=round(wind, 1),
                precipitation=round(precip, 2), condition=cond,
                wind_chill=None if chill is None else round(chill, 1),
            ))
    return out


CORPUS_FILES = ("events.csv", "weather.csv", "poi.csv", "nodes.csv", "ways.csv", "truth.json")


def write_corpus(corpus: SynthCorpus, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in CORPUS_FILES}
    with open(paths["events.csv"], "w", newline="") as f:
        write_events(corpus.events, f, extra_columns=("city", "state"))
    with open(paths["weather.csv"], "w", newline="") as f:
        write_weather(corpus.weather, f)
    with open(paths["poi.csv"], "w", newline="") as f:
        write_pois(corpus.pois, f)
    with open(paths["nodes.csv"], "w", newline="") as f:
        write_nodes(corpus.nodes, f)
    with open(paths["ways.csv"], "w", newline="") as f:
        write_ways(corpus.ways, f)
    paths["truth.json"].write_text(json.dumps(corpus.truth(), indent=2, sort_keys=True) + "\n")
    return paths
