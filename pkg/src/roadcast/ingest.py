"""Parsing and cross-source de-duplication of raw construction records."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, TextIO

import numpy as np

from roadcast.geo import haversine_m

log = logging.getLogger(__name__)

EVENT_COLUMNS = [
    "id",
    "source",
    "severity",
    "start_time",
    "end_time",
    "start_lat",
    "start_lng",
    "end_lat",
    "end_lng",
    "distance",
    "description",
]
SOURCES = ("MapQuest", "Bing")

DEDUP_RADIUS_M = 250.0
DEDUP_WINDOW_S = 30 * 60.0


@dataclass(frozen=True)
class RawEvent:
    id: str
    source: str
    severity: int
    start_time: datetime
    start_lat: float
    start_lng: float
    description: str = ""
    end_time: datetime | None = None
    end_lat: float | None = None
    end_lng: float | None = None
    distance: float | None = None
    # pass-through address columns (city, state, ...) when present in the input
    extra: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class RowError:
    line: int
    reason: str


class ValidationError(ValueError):
    pass


def parse_time(text: str) -> datetime:
    """ISO-8601 with explicit offset, normalized to UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        t = datetime.fromisoformat(text)
    except ValueError:
        raise ValidationError(f"malformed timestamp {text!r}") from None
    if t.tzinfo is None:
        raise ValidationError(f"timestamp without offset {text!r}")
    return t.astimezone(timezone.utc)


def format_time(t: datetime) -> str:
    return t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S+00:00")


def _float(text: str, name: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ValidationError(f"{name} is not a number: {text!r}") from None
    if not np.isfinite(v):
        raise ValidationError(f"{name} is not finite")
    return v


def _lat(text: str, name: str) -> float:
    v = _float(text, name)
    if not -90.0 <= v <= 90.0:
        raise ValidationError(f"{name} out of range")
    return v


def _lng(text: str, name: str) -> float:
    v = _float(text, name)
    if not -180.0 <= v <= 180.0:
        raise ValidationError(f"{name} out of range")
    return v


def _row_to_event(row: dict) -> RawEvent:
    ev_id = (row.get("id") or "").strip()
    if not ev_id:
        raise ValidationError("empty id")
    source = (row.get("source") or "").strip()
    if source not in SOURCES:
        raise ValidationError(f"unknown source {source!r}")
    try:
        severity = int(row.get("severity", ""))
    except ValueError:
        raise ValidationError("severity is not an integer") from None
    if severity not in (1, 2, 3, 4):
        raise ValidationError("severity out of range")
    start = parse_time(row.get("start_time", ""))
    end = parse_time(row["end_time"]) if row.get("end_time") else None
    if end is not None and end < start:
        raise ValidationError("end_time before start_time")
    end_lat = _lat(row["end_lat"], "end_lat") if row.get("end_lat") else None
    end_lng = _lng(row["end_lng"], "end_lng") if row.get("end_lng") else None
    if (end_lat is None) != (end_lng is None):
        raise ValidationError("end point needs both end_lat and end_lng")
    distance = _float(row["distance"], "distance") if row.get("distance") else None
    if distance is not None and distance < 0:
        raise ValidationError("negative distance")
    extra = {k: v for k, v in row.items() if k not in EVENT_COLUMNS and k is not None and v}
    return RawEvent(
        id=ev_id,
        source=source,
        severity=severity,
        start_time=start,
        end_time=end,
        start_lat=_lat(row.get("start_lat", ""), "start_lat"),
        start_lng=_lng(row.get("start_lng", ""), "start_lng"),
        end_lat=end_lat,
        end_lng=end_lng,
        distance=distance,
        description=row.get("description") or "",
        extra=extra,
    )


def parse_events(stream: TextIO) -> tuple[list[RawEvent], list[RowError]]:
    """Parse a CSV stream of raw events.

    Every data row yields either one event or one :class:`RowError` carrying
    the 1-based file line number (the header is line 1).
    """
    reader = csv.DictReader(stream)
    missing = [c for c in EVENT_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"header is missing columns: {', '.join(missing)}")
    events: list[RawEvent] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    for row in reader:
        line = reader.line_num
        try:
            ev = _row_to_event(row)
            if ev.id in seen:
                raise ValidationError(f"duplicate id {ev.id!r}")
        except ValidationError as exc:
            errors.append(RowError(line, str(exc)))
            continue
        seen.add(ev.id)
        events.append(ev)
    if errors:
        log.info("parsed %d events, rejected %d rows", len(events), len(errors))
    return events, errors


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, datetime):
        return format_time(v)
    return str(v)


def write_events(events: Iterable[RawEvent], stream: TextIO, extra_columns: list[str] = ()) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(EVENT_COLUMNS + list(extra_columns))
    for e in events:
        w.writerow(
            [_fmt(getattr(e, c)) for c in EVENT_COLUMNS] + [e.extra.get(c, "") for c in extra_columns]
        )


def is_duplicate(a: RawEvent, b: RawEvent, radius_m: float = DEDUP_RADIUS_M,
                 window_s: float = DEDUP_WINDOW_S) -> bool:
    if abs((a.start_time - b.start_time).total_seconds()) > window_s:
        return False
    return haversine_m(a.start_lat, a.start_lng, b.start_lat, b.start_lng) <= radius_m


def dedup(events: list[RawEvent], radius_m: float = DEDUP_RADIUS_M,
          window_s: float = DEDUP_WINDOW_S) -> list[RawEvent]:
    """Drop near-coincident reports of the same construction.

    Events are visited richest-description first (ties: smaller id); one is
    kept unless an already-kept event lies within ``radius_m`` and
    ``window_s`` of it. No surviving pair satisfies the duplicate predicate,
    so the operation is idempotent. Survivors keep their input order.
    """
    n = len(events)
    if n < 2:
        return list(events)
    t = np.array([e.start_time.timestamp() for e in events])
    lat = np.array([e.start_lat for e in events])
    lng = np.array([e.start_lng for e in events])
    by_time = np.argsort(t, kind="stable")
    t_sorted = t[by_time]

    priority = sorted(range(n), key=lambda i: (-len(events[i].description), events[i].id))
    kept = np.zeros(n, dtype=bool)
    for i in priority:
        lo = np.searchsorted(t_sorted, t[i] - window_s, side="left")
        hi = np.searchsorted(t_sorted, t[i] + window_s, side="right")
        near = by_time[lo:hi]
        near = near[kept[near]]
        if near.size:
            d = haversine_m(lat[i], lng[i], lat[near], lng[near])
            if np.any(np.atleast_1d(d) <= radius_m):
                continue
        kept[i] = True
    out = [e for e, k in zip(events, kept) if k]
    log.info("dedup kept %d of %d events", len(out), n)
    return out
