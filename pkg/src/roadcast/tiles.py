"""Deterministic road-network raster tiles centred on each zone."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roadcast.augment.roads import ROAD_CLASSES, RoadNetwork
from roadcast.grid import GridConfig, HexCell, cell_center, project

log = logging.getLogger(__name__)

TILE_SIZE = 256
METERS_PER_PIXEL = 9.547  # ground resolution of a zoom-14 web-map tile
TILE_SPAN_M = TILE_SIZE * METERS_PER_PIXEL
WHITE = (255, 255, 255)


class TileFormatError(ValueError):
    pass


def _default_styles() -> dict[str, tuple[tuple[int, int, int], int]]:
    styles = {c: ((128, 128, 128), 1) for c in ROAD_CLASSES}
    styles["motorway"] = ((0, 0, 255), 3)
    styles["trunk"] = ((255, 0, 0), 2)
    styles["primary"] = ((255, 0, 0), 2)
    styles["secondary"] = ((255, 165, 0), 2)
    styles["tertiary"] = ((255, 165, 0), 2)
    styles["residential"] = ((0, 0, 0), 1)
    return styles


@dataclass(frozen=True)
class Palette:
    styles: dict = field(default_factory=_default_styles)

    def __post_init__(self):
        missing = set(ROAD_CLASSES) - set(self.styles)
        if missing:
            raise ValueError(f"palette lacks road classes: {sorted(missing)}")

    def colors(self) -> set[tuple[int, int, int]]:
        return {tuple(c) for c, _ in self.styles.values()}


@dataclass
class Tile:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8, row-major RGB

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3) or self.pixels.dtype != np.uint8:
            raise TileFormatError("pixel array does not match the tile size")

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float32) / np.float32(255.0)

    @classmethod
    def blank(cls, size: int = TILE_SIZE) -> "Tile":
        return cls(size, size, np.full((size, size, 3), 255, dtype=np.uint8))


# ---- rasterization ------------------------------------------------------------------

def _clip_segment(x0, y0, x1, y1, lo, hi):
    """Liang-Barsky clip of a segment to the square [lo, hi]^2; None if it misses."""
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - lo), (dx, hi - x0), (-dy, y0 - lo), (dy, hi - y0)):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    return x0 + t0 * dx, y0 + t0 * dy, x0 + t1 * dx, y0 + t1 * dy


def bresenham(x0: int, y0: int, x1: int, y1: int):
    """Integer points on the line from (x0, y0) to (x1, y1), inclusive."""
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield x0, y0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _stamp(pixels: np.ndarray, col: int, row: int, width: int, color) -> None:
    # a width-w stroke is the w x w block anchored (w - 1) // 2 up/left of the pixel
    lo = -((width - 1) // 2)
    hi = lo + width
    size = pixels.shape[0]
    r0, r1 = max(row + lo, 0), min(row + hi, size)
    c0, c1 = max(col + lo, 0), min(col + hi, size)
    if r0 < r1 and c0 < c1:
        pixels[r0:r1, c0:c1] = color


def render_tile(cell: HexCell, network: RoadNetwork, grid: GridConfig,
                palette: Palette = Palette(), size: int = TILE_SIZE,
                span_m: float = TILE_SPAN_M) -> Tile:
    """Rasterize every way crossing the square of side ``span_m`` centred on the cell.

    Pixel (col, row) covers planar x in ``[cx - span/2 + col*res, ... + res)``
    and y from the top edge downward. Ways are drawn in ascending ``way_id``.
    """
    pixels = np.full((size, size, 3), 255, dtype=np.uint8)
    res = span_m / size
    clat, clng = cell_center(cell, grid)
    cx, cy = (float(v) for v in project(clat, clng, grid))
    lo, hi = 0.0, size - 1e-9
    for way in network.ways:  # already sorted by way_id
        pts = [network.node_by_id[n] for n in way.node_ids if n in network.node_by_id]
        if len(pts) < 2:
            continue
        xs, ys = project([p.lat for p in pts], [p.lng for p in pts], grid)
        u = (np.asarray(xs) - cx) / res + size / 2.0
        v = size / 2.0 - (np.asarray(ys) - cy) / res
        color, width = palette.styles[way.road_class]
        color = np.array(color, dtype=np.uint8)
        for i in range(len(pts) - 1):
            seg = _clip_segment(u[i], v[i], u[i + 1], v[i + 1], lo, hi)
            if seg is None:
                continue
            # the epsilon absorbs projection round-off for points on a pixel edge
            c0, r0, c1, r1 = (int(math.floor(t + 1e-7)) for t in seg)
            for col, row in bresenham(c0, r0, c1, r1):
                _stamp(pixels, col, row, width, color)
    return Tile(size, size, pixels)


def coverage_warning(grid: GridConfig, span_m: float = TILE_SPAN_M) -> str | None:
    """Message when the tile square is narrower than the zone's circumdiameter."""
    diameter = 2.0 * grid.edge_m
    if span_m < diameter:
        return (f"tile side {span_m:.0f} m is smaller than the zone circumdiameter "
                f"{diameter:.0f} m; corners of the zone fall outside its tile")
    return None


# ---- PPM I/O ----------------------------------------------------------------------

def save_tile(tile: Tile, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P6\n{tile.width} {tile.height}\n255\n".encode("ascii")
    path.write_bytes(header + tile.tobytes())


def load_tile(path) -> Tile:
    raw = Path(path).read_bytes()
    fields_, pos = [], 0
    while len(fields_) < 4:
        # skip whitespace and comments
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            end = raw.find(b"\n", pos)
            if end < 0:
                raise TileFormatError(f"{path}: truncated header")
            pos = end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TileFormatError(f"{path}: truncated header")
        fields_.append(raw[start:pos])
    if fields_[0] != b"P6":
        raise TileFormatError(f"{path}: not a binary PPM (P6) file")
    try:
        width, height, maxval = (int(f) for f in fields_[1:])
    except ValueError:
        raise TileFormatError(f"{path}: malformed header") from None
    if maxval != 255:
        raise TileFormatError(f"{path}: only maxval 255 is supported")
    body = raw[pos + 1:]
    if len(body) != width * height * 3:
        raise TileFormatError(f"{path}: expected {width * height * 3} pixel bytes, found {len(body)}")
    return Tile(width, height, np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy())


def tile_filename(cell: HexCell) -> str:
    return f"{cell.q}_{cell.r}.ppm"
