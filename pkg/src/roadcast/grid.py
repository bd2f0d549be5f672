"""Planar hexagonal zones and fixed-length time intervals.

Zones are a flat-top regular hexagon lattice laid over a local
equirectangular projection centred on ``GridConfig.origin``. Cells are
addressed by axial coordinates ``(q, r)``; centre of cell ``(q, r)`` is at
``x = 1.5 a q``, ``y = sqrt(3) a (r + q / 2)`` for edge length ``a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import NamedTuple

import numpy as np

from roadcast.geo import EARTH_RADIUS_M

SQRT3 = math.sqrt(3.0)
DOMAIN_DEG = 5.0


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    origin_lat: float = 39.9612
    origin_lng: float = -82.9988
    hex_area_km2: float = 5.16
    epoch_start: datetime = datetime(2016, 2, 1, tzinfo=timezone.utc)
    interval_days: int = 15

    def __post_init__(self):
        if not self.hex_area_km2 > 0:
            raise ValueError("hex_area_km2 must be positive")
        if self.interval_days < 1:
            raise ValueError("interval_days must be >= 1")
        if self.epoch_start.tzinfo is None:
            object.__setattr__(self, "epoch_start", self.epoch_start.replace(tzinfo=timezone.utc))

    @property
    def edge_m(self) -> float:
        return math.sqrt(self.hex_area_km2 * 1e6 / (1.5 * SQRT3))

    def to_dict(self) -> dict:
        return {
            "origin_lat": self.origin_lat,
            "origin_lng": self.origin_lng,
            "hex_area_km2": self.hex_area_km2,
            "epoch_start": self.epoch_start.date().isoformat(),
            "interval_days": self.interval_days,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        d = dict(d)
        if "epoch_start" in d and isinstance(d["epoch_start"], str):
            d["epoch_start"] = datetime.fromisoformat(d["epoch_start"]).replace(tzinfo=timezone.utc)
        return cls(**d)


class HexCell(NamedTuple):
    q: int
    r: int

    @property
    def id(self) -> str:
        return f"{self.q}:{self.r}"

    @classmethod
    def parse(cls, text: str) -> "HexCell":
        q, r = text.split(":")
        return cls(int(q), int(r))


# ---- projection ---------------------------------------------------------------

def project(lat, lng, config: GridConfig):
    """(lat, lng) degrees to local planar meters about the grid origin."""
    lat = np.asarray(lat, dtype=float)
    lng = np.asarray(lng, dtype=float)
    if np.any(np.abs(lat - config.origin_lat) > DOMAIN_DEG) or np.any(
        np.abs(lng - config.origin_lng) > DOMAIN_DEG
    ):
        raise OutOfDomainError("point lies outside the local projection window")
    x = EARTH_RADIUS_M * np.radians(lng - config.origin_lng) * math.cos(math.radians(config.origin_lat))
    y = EARTH_RADIUS_M * np.radians(lat - config.origin_lat)
    return x, y


def unproject(x, y, config: GridConfig):
    lat = config.origin_lat + np.degrees(np.asarray(y, dtype=float) / EARTH_RADIUS_M)
    lng = config.origin_lng + np.degrees(
        np.asarray(x, dtype=float) / (EARTH_RADIUS_M * math.cos(math.radians(config.origin_lat)))
    )
    return lat, lng


# ---- lattice ------------------------------------------------------------------

def _cube_round(fq, fr):
    fs = -fq - fr
    q = np.rint(fq)
    r = np.rint(fr)
    s = np.rint(fs)
    dq = np.abs(q - fq)
    dr = np.abs(r - fr)
    ds = np.abs(s - fs)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(np.int64), r.astype(np.int64)


def locate_xy(x, y, config: GridConfig):
    a = config.edge_m
    fq = (2.0 / 3.0) * np.asarray(x) / a
    fr = (-np.asarray(x) / 3.0 + SQRT3 / 3.0 * np.asarray(y)) / a
    return _cube_round(fq, fr)


def center_xy(q, r, config: GridConfig):
    a = config.edge_m
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    return 1.5 * a * q, SQRT3 * a * (r + q / 2.0)


def locate(lat: float, lng: float, config: GridConfig) -> HexCell:
    q, r = locate_xy(*project(lat, lng, config), config)
    return HexCell(int(q), int(r))


def locate_many(lats, lngs, config: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    return locate_xy(*project(lats, lngs, config), config)


def cell_center(cell: HexCell, config: GridConfig) -> tuple[float, float]:
    lat, lng = unproject(*center_xy(cell[0], cell[1], config), config)
    return float(lat), float(lng)


def cell_vertices_xy(cell: HexCell, config: GridConfig) -> list[tuple[float, float]]:
    cx, cy = center_xy(cell[0], cell[1], config)
    a = config.edge_m
    return [
        (float(cx + a * math.cos(math.radians(60 * k))), float(cy + a * math.sin(math.radians(60 * k))))
        for k in range(6)
    ]


def cell_polygon(cell: HexCell, config: GridConfig) -> list[tuple[float, float]]:
    """Six (lat, lng) vertices, counter-clockwise, first vertex due east of the centre."""
    out = []
    for x, y in cell_vertices_xy(cell, config):
        lat, lng = unproject(x, y, config)
        out.append((float(lat), float(lng)))
    return out


def neighbors(cell: HexCell) -> list[HexCell]:
    q, r = cell
    return [HexCell(q + dq, r + dr) for dq, dr in ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))]


def polygon_area_m2(xy) -> float:
    """Shoelace area of a planar ring (positive when counter-clockwise)."""
    s = 0.0
    for (x1, y1), (x2, y2) in zip(xy, xy[1:] + xy[:1]):
        s += x1 * y2 - x2 * y1
    return s / 2.0


# ---- time ---------------------------------------------------------------------

def interval_of(when: datetime, config: GridConfig) -> int:
    if when.tzinfo is None:
        when = when.replace(tzinfo=timezone.utc)
    delta = when - config.epoch_start
    if delta < timedelta(0):
        raise ValueError(f"{when.isoformat()} precedes the grid epoch")
    return delta // timedelta(days=config.interval_days)


def interval_start(index: int, config: GridConfig) -> datetime:
    return config.epoch_start + timedelta(days=config.interval_days * index)
