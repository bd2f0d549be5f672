"""Point-of-interest annotation within a distance threshold."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

from roadcast.geo import PointIndex
from roadcast.ingest import ValidationError

POI_TAGS = (
    "amenity", "bump", "crossing", "junction", "no_exit", "railway", "roundabout",
    "station", "stop", "traffic_calming", "traffic_signal", "turning_loop",
    "entrance", "give_way", "turning_circle",
)
POI_TAU_M = 30.0


@dataclass(frozen=True)
class PoiRecord:
    lat: float
    lng: float
    tag: str

    def __post_init__(self):
        if self.tag not in POI_TAGS:
            raise ValidationError(f"unknown POI tag {self.tag!r}")


def read_pois(stream: TextIO) -> list[PoiRecord]:
    return [PoiRecord(float(r["lat"]), float(r["lng"]), r["tag"]) for r in csv.DictReader(stream)]


def write_pois(pois, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["lat", "lng", "tag"])
    for p in pois:
        w.writerow([p.lat, p.lng, p.tag])


class PoiIndex:
    def __init__(self, pois):
        self.pois = list(pois)
        self._index = PointIndex([p.lat for p in self.pois], [p.lng for p in self.pois])

    def flags(self, lat: float, lng: float, tau: float = POI_TAU_M) -> tuple[bool, ...]:
        if tau <= 0:
            raise ValueError("tau must be positive")
        present = {self.pois[i].tag for i in self._index.within(lat, lng, tau)}
        return tuple(t in present for t in POI_TAGS)


def attach_poi(event, index: PoiIndex, tau: float = POI_TAU_M) -> tuple[bool, ...]:
    """One flag per tag in ``POI_TAGS``: is such a POI within ``tau`` meters of the start point."""
    return index.flags(event.start_lat, event.start_lng, tau)
