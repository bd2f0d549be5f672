"""Offline augmentation of raw events: closure, weather, POI, daylight, road class, speed."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import Iterable, TextIO

from roadcast.augment.closure import ClosureType, annotate_closure
from roadcast.augment.daylight import SYSTEMS, period_of_day
from roadcast.augment.poi import POI_TAGS, POI_TAU_M, PoiIndex, attach_poi
from roadcast.augment.roads import (
    NEAREST_NODES, NODE_RADIUS_M, ROAD_CLASSES, RoadNetwork, infer_avg_speed,
    infer_road_class, travel_time_minutes,
)
from roadcast.augment.weather import WeatherIndex, WeatherObservation, attach_weather
from roadcast.ingest import EVENT_COLUMNS, RawEvent, ValidationError, format_time, parse_time

__all__ = [
    "AugmentedEvent", "augment_event", "augment_events", "read_augmented", "write_augmented",
    "ClosureType", "POI_TAGS", "ROAD_CLASSES", "SYSTEMS",
]


@dataclass(frozen=True)
class AugmentedEvent:
    event: RawEvent
    closure: ClosureType
    weather: WeatherObservation | None
    poi_flags: tuple[bool, ...]
    daylight: tuple[bool, bool, bool, bool]
    road_class: str
    road_resolved: bool
    avg_speed: float
    travel_time: float | None

    def __post_init__(self):
        if len(self.poi_flags) != len(POI_TAGS):
            raise ValidationError("poi_flags must have one entry per tag")
        # day under a stricter system implies day under every looser one
        if any(a and not b for a, b in zip(self.daylight, self.daylight[1:])):
            raise ValidationError("daylight flags are not monotone")
        if not self.avg_speed > 0:
            raise ValidationError("avg_speed must be positive")

    def __getattr__(self, name):
        # expose RawEvent fields directly (start_lat, severity, ...)
        if name != "event" and name in RawEvent.__dataclass_fields__:
            return getattr(self.event, name)
        raise AttributeError(name)


def augment_event(event: RawEvent, weather: WeatherIndex, pois: PoiIndex, roads: RoadNetwork,
                  tau: float = POI_TAU_M, s: int = NEAREST_NODES,
                  d: float = NODE_RADIUS_M) -> AugmentedEvent:
    road_class, ways = infer_road_class(event, roads, s, d)
    speed = infer_avg_speed(road_class, ways)
    return AugmentedEvent(
        event=event,
        closure=annotate_closure(event.description),
        weather=attach_weather(event, weather),
        poi_flags=attach_poi(event, pois, tau),
        daylight=period_of_day(event.start_lat, event.start_lng, event.start_time),
        road_class=road_class,
        road_resolved=bool(ways),
        avg_speed=speed,
        travel_time=travel_time_minutes(event.distance, speed),
    )


def augment_events(events: Iterable[RawEvent], weather, pois, roads, **kw) -> list[AugmentedEvent]:
    return [augment_event(e, weather, pois, roads, **kw) for e in events]


_WEATHER_FIELDS = [f.name for f in fields(WeatherObservation)]
AUGMENTED_COLUMNS = (
    EVENT_COLUMNS
    + ["city", "state", "closure", "road_class", "road_resolved", "avg_speed", "travel_time"]
    + [f"weather_{f}" for f in _WEATHER_FIELDS]
    + [f"poi_{t}" for t in POI_TAGS]
    + [f"day_{s}" for s in SYSTEMS]
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if hasattr(v, "tzinfo"):
        return format_time(v)
    if isinstance(v, ClosureType):
        return v.value
    return repr(v) if isinstance(v, float) else str(v)


def write_augmented(events: Iterable[AugmentedEvent], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(AUGMENTED_COLUMNS)
    for a in events:
        e = a.event
        row = [_cell(getattr(e, c)) for c in EVENT_COLUMNS]
        row += [e.extra.get("city", ""), e.extra.get("state", "")]
        row += [_cell(a.closure), a.road_class, _cell(a.road_resolved), _cell(a.avg_speed),
                _cell(a.travel_time)]
        row += [_cell(getattr(a.weather, f)) if a.weather else "" for f in _WEATHER_FIELDS]
        row += [_cell(b) for b in a.poi_flags]
        row += [_cell(b) for b in a.daylight]
        w.writerow(row)


def _opt_float(s: str) -> float | None:
    return float(s) if s else None


def read_augmented(stream: TextIO) -> list[AugmentedEvent]:
    out = []
    for r in csv.DictReader(stream):
        extra = {k: r[k] for k in ("city", "state") if r.get(k)}
        ev = RawEvent(
            id=r["id"], source=r["source"], severity=int(r["severity"]),
            start_time=parse_time(r["start_time"]),
            end_time=parse_time(r["end_time"]) if r["end_time"] else None,
            start_lat=float(r["start_lat"]), start_lng=float(r["start_lng"]),
            end_lat=_opt_float(r["end_lat"]), end_lng=_opt_float(r["end_lng"]),
            distance=_opt_float(r["distance"]), description=r["description"], extra=extra,
        )
        weather = None
        if r["weather_station_id"]:
            weather = WeatherObservation(
                station_id=r["weather_station_id"],
                station_lat=float(r["weather_station_lat"]),
                station_lng=float(r["weather_station_lng"]),
                time=parse_time(r["weather_time"]),
                temperature=float(r["weather_temperature"]),
                humidity=float(r["weather_humidity"]),
                pressure=float(r["weather_pressure"]),
                visibility=float(r["weather_visibility"]),
                wind_direction=r["weather_wind_direction"],
                wind_speed=float(r["weather_wind_speed"]),
                precipitation=float(r["weather_precipitation"]),
                condition=r["weather_condition"],
                wind_chill=_opt_float(r["weather_wind_chill"]),
            )
        out.append(AugmentedEvent(
            event=ev,
            closure=ClosureType(r["closure"]),
            weather=weather,
            poi_flags=tuple(r[f"poi_{t}"] == "1" for t in POI_TAGS),
            daylight=tuple(r[f"day_{s}"] == "1" for s in SYSTEMS),
            road_class=r["road_class"],
            road_resolved=r["road_resolved"] == "1",
            avg_speed=float(r["avg_speed"]),
            travel_time=_opt_float(r["travel_time"]),
        ))
    return out
