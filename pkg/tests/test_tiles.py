import numpy as np
import pytest

from roadcast.augment.roads import ROAD_CLASSES, RoadNetwork, RoadNode, RoadWay
from roadcast.grid import GridConfig, HexCell, cell_center
from roadcast.tiles import (
    TILE_SPAN_M, Palette, Tile, TileFormatError, bresenham, coverage_warning, load_tile,
    render_tile, save_tile, tile_filename,
)

from conftest import offset

GRID = GridConfig()
CELL = HexCell(0, 0)
LAT, LNG = cell_center(CELL, GRID)


def straight_way(cls="residential", north=0.0, half=3000.0, way_id=1, first_node=1):
    a = RoadNode(first_node, *offset(LAT, LNG, north_m=north, east_m=-half))
    b = RoadNode(first_node + 1, *offset(LAT, LNG, north_m=north, east_m=half))
    return [a, b], RoadWay(way_id, (a.node_id, b.node_id), cls)


def test_span():
    assert TILE_SPAN_M == pytest.approx(2444.03, abs=0.01)


def test_empty_network_gives_blank_tile():
    tile = render_tile(CELL, RoadNetwork([], []), GRID)
    assert tile.pixels.shape == (256, 256, 3) and np.all(tile.pixels == 255)
    assert tile.tobytes() == Tile.blank().tobytes()


def test_west_east_line_through_centre():
    nodes, way = straight_way()
    px = render_tile(CELL, RoadNetwork(nodes, [way]), GRID).pixels
    dark = np.any(px != 255, axis=2)
    assert dark[128].all()
    assert not np.delete(dark, 128, axis=0).any()
    assert (px[128] == 0).all()  # residential is black


def test_width_three_stroke():
    nodes, way = straight_way("motorway")
    px = render_tile(CELL, RoadNetwork(nodes, [way]), GRID).pixels
    rows = np.flatnonzero(np.any(px != 255, axis=(1, 2)))
    assert rows.tolist() == [127, 128, 129]
    assert (px[127:130] == (0, 0, 255)).all()


def test_later_ways_overdraw_earlier_ones():
    n1, w1 = straight_way("primary", way_id=2)
    n2, w2 = straight_way("residential", way_id=1, first_node=10)
    px = render_tile(CELL, RoadNetwork(n1 + n2, [w1, w2]), GRID).pixels
    assert (px[128] == (255, 0, 0)).all()


def test_way_outside_square_is_clipped_away():
    nodes, way = straight_way(north=2000.0)
    assert np.all(render_tile(CELL, RoadNetwork(nodes, [way]), GRID).pixels == 255)


def test_bresenham_against_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x0, y0, x1, y1 = (int(v) for v in rng.integers(-20, 20, 4))
        pts = list(bresenham(x0, y0, x1, y1))
        assert pts[0] == (x0, y0) and pts[-1] == (x1, y1)
        assert len(pts) == max(abs(x1 - x0), abs(y1 - y0)) + 1
        # consecutive points are 8-connected and stay within half a pixel of the ideal line
        for (a, b), (c, d) in zip(pts, pts[1:]):
            assert max(abs(c - a), abs(d - b)) == 1
        if (x0, y0) != (x1, y1):
            dx, dy = x1 - x0, y1 - y0
            for x, y in pts:
                cross = abs(dx * (y - y0) - dy * (x - x0)) / max(abs(dx), abs(dy))
                assert cross <= 0.5 + 1e-9


def test_rendering_is_deterministic():
    nodes, way = straight_way("secondary")
    diag = [RoadNode(20, *offset(LAT, LNG, -900, -700)), RoadNode(21, *offset(LAT, LNG, 800, 950))]
    net = RoadNetwork(nodes + diag, [way, RoadWay(5, (20, 21), "trunk")])
    a, b = render_tile(CELL, net, GRID), render_tile(CELL, net, GRID)
    assert a.tobytes() == b.tobytes()


def test_palette_colours_only():
    rng = np.random.default_rng(3)
    nodes, ways = [], []
    for i in range(12):
        a = RoadNode(2 * i, *offset(LAT, LNG, *rng.uniform(-1500, 1500, 2)))
        b = RoadNode(2 * i + 1, *offset(LAT, LNG, *rng.uniform(-1500, 1500, 2)))
        nodes += [a, b]
        ways.append(RoadWay(i, (a.node_id, b.node_id), ROAD_CLASSES[i % len(ROAD_CLASSES)]))
    px = render_tile(CELL, RoadNetwork(nodes, ways), GRID).pixels
    seen = {tuple(c) for c in px.reshape(-1, 3)}
    assert seen <= Palette().colors() | {(255, 255, 255)}
    with pytest.raises(ValueError):
        Palette({"motorway": ((0, 0, 0), 1)})


def test_ppm_round_trip_and_header(tmp_path):
    pix = np.random.default_rng(1).integers(0, 256, (256, 256, 3), dtype=np.uint8)
    tile = Tile(256, 256, pix)
    path = tmp_path / tile_filename(HexCell(-2, 3))
    assert path.name == "-2_3.ppm"
    save_tile(tile, path)
    raw = path.read_bytes()
    assert raw.startswith(b"P6\n256 256\n255\n") and len(raw) == 15 + 256 * 256 * 3
    assert load_tile(path).tobytes() == tile.tobytes()


def test_malformed_files(tmp_path):
    path = tmp_path / "t.ppm"
    save_tile(Tile.blank(8), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-1])
    with pytest.raises(TileFormatError):
        load_tile(path)
    path.write_bytes(b"P3\n8 8\n255\n" + raw[11:])
    with pytest.raises(TileFormatError):
        load_tile(path)
    path.write_bytes(b"P6\n8")
    with pytest.raises(TileFormatError):
        load_tile(path)
    with pytest.raises(TileFormatError):
        Tile(4, 4, np.zeros((4, 5, 3), np.uint8))


def test_coverage_warning_for_default_zones():
    # the 2444 m square is narrower than the 2819 m circumdiameter
    assert "circumdiameter" in coverage_warning(GRID)
    assert coverage_warning(GRID, span_m=3000.0) is None
