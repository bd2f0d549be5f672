"""Road-class and free-flow speed inference from a node/way road network."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import TextIO

from roadcast.geo import PointIndex
from roadcast.ingest import ValidationError

ROAD_CLASSES = (
    "motorway", "trunk", "primary", "secondary", "tertiary", "residential", "service",
    "motorway_link", "trunk_link", "primary_link", "secondary_link", "tertiary_link",
    "unclassified", "living_street", "pedestrian", "track", "busway", "footway",
    "bridleway", "steps", "path", "cycleway", "construction", "road", "other",
)
# frequency ties resolve toward the earlier entry
CLASS_PRIORITY = {c: i for i, c in enumerate(ROAD_CLASSES)}

DEFAULT_SPEED_MPH = {
    "motorway": 65.0,
    "trunk": 55.0,
    "primary": 45.0,
    "secondary": 40.0,
    "tertiary": 35.0,
    "residential": 25.0,
}
FALLBACK_SPEED_MPH = 25.0

NEAREST_NODES = 10
NODE_RADIUS_M = 50.0


@dataclass(frozen=True)
class RoadNode:
    node_id: int
    lat: float
    lng: float


@dataclass(frozen=True)
class RoadWay:
    way_id: int
    node_ids: tuple[int, ...]
    road_class: str
    maxspeed: float | None = None

    def __post_init__(self):
        if len(self.node_ids) < 2:
            raise ValidationError(f"way {self.way_id} needs at least two nodes")
        if self.road_class not in CLASS_PRIORITY:
            raise ValidationError(f"unknown road class {self.road_class!r}")


def read_nodes(stream: TextIO) -> list[RoadNode]:
    return [RoadNode(int(r["node_id"]), float(r["lat"]), float(r["lng"])) for r in csv.DictReader(stream)]


def read_ways(stream: TextIO) -> list[RoadWay]:
    out = []
    for r in csv.DictReader(stream):
        out.append(RoadWay(
            way_id=int(r["way_id"]),
            node_ids=tuple(int(x) for x in r["node_ids"].split("|")),
            road_class=r["road_class"],
            maxspeed=float(r["maxspeed"]) if r.get("maxspeed") else None,
        ))
    return out


def write_nodes(nodes, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["node_id", "lat", "lng"])
    for n in nodes:
        w.writerow([n.node_id, n.lat, n.lng])


def write_ways(ways, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["way_id", "road_class", "maxspeed", "node_ids"])
    for way in ways:
        w.writerow([way.way_id, way.road_class, "" if way.maxspeed is None else way.maxspeed,
                    "|".join(str(n) for n in way.node_ids)])


class RoadNetwork:
    def __init__(self, nodes, ways):
        nodes = sorted(nodes, key=lambda n: n.node_id)
        ids = [n.node_id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValidationError("node ids must be unique")
        self.nodes = nodes
        self.node_by_id = {n.node_id: n for n in nodes}
        self.ways = sorted(ways, key=lambda w: w.way_id)
        self.ways_of_node: dict[int, list[RoadWay]] = {}
        for way in self.ways:
            for nid in dict.fromkeys(way.node_ids):
                self.ways_of_node.setdefault(nid, []).append(way)
        self._index = PointIndex([n.lat for n in nodes], [n.lng for n in nodes])

    def candidate_nodes(self, points, s: int = NEAREST_NODES, d: float = NODE_RADIUS_M) -> set[int]:
        """Union over ``points`` of their ``s`` nearest nodes, keeping those within ``d`` meters."""
        if s < 1 or d <= 0:
            raise ValueError("need s >= 1 and d > 0")
        keep: set[int] = set()
        for lat, lng in points:
            idx, dist = self._index.nearest(lat, lng, s)
            keep.update(self.nodes[i].node_id for i, m in zip(idx, dist) if m <= d)
        return keep

    def matched_ways(self, event, s: int = NEAREST_NODES, d: float = NODE_RADIUS_M) -> list[RoadWay]:
        points = [(event.start_lat, event.start_lng)]
        if event.end_lat is not None:
            points.append((event.end_lat, event.end_lng))
        found: dict[int, RoadWay] = {}
        for nid in self.candidate_nodes(points, s, d):
            for way in self.ways_of_node.get(nid, ()):
                found[way.way_id] = way
        return [found[k] for k in sorted(found)]


def majority_class(ways) -> str:
    counts = Counter(w.road_class for w in ways)
    if not counts:
        return "other"
    return min(counts, key=lambda c: (-counts[c], CLASS_PRIORITY[c]))


def infer_road_class(event, network: RoadNetwork, s: int = NEAREST_NODES,
                     d: float = NODE_RADIUS_M) -> tuple[str, list[RoadWay]]:
    """Most frequent class among ways touching nearby nodes.

    Returns the class and the matched ways; no match gives ``("other", [])``.
    """
    ways = network.matched_ways(event, s, d)
    return majority_class(ways), ways


def infer_avg_speed(road_class: str, matched_ways) -> float:
    declared = [w.maxspeed for w in matched_ways if w.maxspeed is not None]
    if declared:
        return sum(declared) / len(declared)
    return DEFAULT_SPEED_MPH.get(road_class, FALLBACK_SPEED_MPH)


def travel_time_minutes(distance_miles: float | None, avg_speed_mph: float) -> float | None:
    if distance_miles is None:
        return None
    return distance_miles / avg_speed_mph * 60.0
