"""Nearest-station, nearest-time weather attachment."""
from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass
from datetime import datetime
from typing import TextIO

import numpy as np

from roadcast.geo import haversine_m
from roadcast.ingest import ValidationError, format_time, parse_time

CONDITIONS = ("clear", "snow", "rain", "fog", "hail", "thunderstorm")
WEATHER_COLUMNS = [
    "station_id", "station_lat", "station_lng", "time", "temperature", "wind_chill",
    "humidity", "pressure", "visibility", "wind_direction", "wind_speed",
    "precipitation", "condition",
]


@dataclass(frozen=True)
class WeatherObservation:
    station_id: str
    station_lat: float
    station_lng: float
    time: datetime
    temperature: float
    humidity: float
    pressure: float
    visibility: float
    wind_direction: str
    wind_speed: float
    precipitation: float
    condition: str
    wind_chill: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.humidity <= 100.0:
            raise ValidationError("humidity out of range")
        if self.precipitation < 0:
            raise ValidationError("negative precipitation")
        if self.condition not in CONDITIONS:
            raise ValidationError(f"unknown condition {self.condition!r}")


def read_weather(stream: TextIO) -> list[WeatherObservation]:
    out = []
    for row in csv.DictReader(stream):
        out.append(
            WeatherObservation(
                station_id=row["station_id"],
                station_lat=float(row["station_lat"]),
                station_lng=float(row["station_lng"]),
                time=parse_time(row["time"]),
                temperature=float(row["temperature"]),
                wind_chill=float(row["wind_chill"]) if row.get("wind_chill") else None,
                humidity=float(row["humidity"]),
                pressure=float(row["pressure"]),
                visibility=float(row["visibility"]),
                wind_direction=row["wind_direction"],
                wind_speed=float(row["wind_speed"]),
                precipitation=float(row["precipitation"]),
                condition=row["condition"],
            )
        )
    return out


def write_weather(observations, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(WEATHER_COLUMNS)
    for o in observations:
        w.writerow([
            o.station_id, o.station_lat, o.station_lng, format_time(o.time), o.temperature,
            "" if o.wind_chill is None else o.wind_chill, o.humidity, o.pressure,
            o.visibility, o.wind_direction, o.wind_speed, o.precipitation, o.condition,
        ])


class WeatherIndex:
    """Observations grouped per station and sorted by time."""

    def __init__(self, observations):
        by_station: dict[str, list[WeatherObservation]] = {}
        for o in observations:
            by_station.setdefault(o.station_id, []).append(o)
        self.station_ids = sorted(by_station)
        self.series = {s: sorted(by_station[s], key=lambda o: o.time) for s in self.station_ids}
        self.times = {s: [o.time.timestamp() for o in self.series[s]] for s in self.station_ids}
        first = [self.series[s][0] for s in self.station_ids]
        self.lats = np.array([o.station_lat for o in first])
        self.lngs = np.array([o.station_lng for o in first])

    def nearest_station(self, lat: float, lng: float) -> str | None:
        if not self.station_ids:
            return None
        d = np.atleast_1d(haversine_m(lat, lng, self.lats, self.lngs))
        # station_ids are sorted, so argmin's first-hit rule breaks ties by smaller id
        return self.station_ids[int(np.argmin(d))]

    def closest_in_time(self, station_id: str, when: datetime) -> WeatherObservation:
        times = self.times[station_id]
        ts = when.timestamp()
        i = bisect.bisect_left(times, ts)
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(times):
                gap = abs(times[j] - ts)
                if best is None or gap < best[0]:
                    best = (gap, j)
        return self.series[station_id][best[1]]


def attach_weather(event, index: WeatherIndex) -> WeatherObservation | None:
    """Observation from the nearest station closest in time to the event start.

    Returns None when no station is available.
    """
    station = index.nearest_station(event.start_lat, event.start_lng)
    if station is None:
        return None
    return index.closest_in_time(station, event.start_time)
