from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from roadcast.augment import AugmentedEvent, ClosureType
from roadcast.augment.poi import POI_TAGS, PoiRecord
from roadcast.augment.roads import ROAD_CLASSES
from roadcast.augment.weather import WeatherObservation
from roadcast.features import (
    FEATURE_NAMES, N_FEATURES, FeatureTable, POI, ROAD_TYPE, WEATHER_EVENTS, NormStats, WeatherMapping,
    aggregate, build_feature_table, build_windows, load_feature_store, normalize,
    save_feature_store, spatial_split, split_of_date, split_sizes, temporal_split, window_arrays,
)
from roadcast.grid import GridConfig, HexCell, cell_center, interval_start

from conftest import T0, make_event

GRID = GridConfig()


def weather(temp=50.0, condition="clear", mm=0.0, visibility=10.0, humidity=60.0):
    return WeatherObservation("S1", 40.0, -83.0, T0, temp, humidity, 29.9, visibility, "N", 3.0,
                              mm, condition)


def aug(road_class="primary", temp=None, closure=ClosureType.NONE, severity=2, when=T0,
        lat=None, lng=None, **kw):
    ev = make_event(severity=severity, when=when, lat=lat or GRID.origin_lat,
                    lng=lng or GRID.origin_lng, **kw)
    return AugmentedEvent(ev, closure, None if temp is None else weather(temp), (False,) * 15,
                          (True,) * 4, road_class, True, 40.0, None)


def test_layout():
    assert N_FEATURES == 59 == len(FEATURE_NAMES)
    assert len(WEATHER_EVENTS) == 12 and POI == slice(14, 29) and ROAD_TYPE == slice(29, 54)


def test_mean_temperature():
    v, label = aggregate([aug(temp=50.0), aug(temp=70.0)], np.zeros(15))
    assert v[0] == 60.0 and label == 1


def test_empty_interval_keeps_static_poi_counts():
    counts = np.zeros(15)
    counts[POI_TAGS.index("traffic_signal")] = 3
    v, label = aggregate([], counts)
    assert label == 0 and v[14 + POI_TAGS.index("traffic_signal")] == 3
    assert np.count_nonzero(np.delete(v, range(14, 29))) == 0


def test_road_type_one_hot_average():
    v, _ = aggregate([aug("motorway"), aug("motorway"), aug("residential")], np.zeros(15))
    road = v[ROAD_TYPE]
    expected = np.zeros(25)
    expected[ROAD_CLASSES.index("motorway")] = 2 / 3
    expected[ROAD_CLASSES.index("residential")] = 1 / 3
    assert np.allclose(road, expected)


def test_road_info_block():
    v, _ = aggregate([aug(closure=ClosureType.LANE, severity=4, distance=1.0),
                      aug(severity=2)], np.zeros(15))
    assert v[54] == 0.5 and v[55] == 40.0 and v[57] == 0.5 and v[58] == 3.0


@pytest.mark.parametrize("cond,mm,vis,temp,expected", [
    ("rain", 1.0, 10, 50, "light_rain"),
    ("rain", 5.0, 10, 50, "moderate_rain"),
    ("snow", 9.0, 10, 20, "heavy_snow"),
    ("thunderstorm", 0.0, 10, 60, "severe_storm"),
    ("fog", 0.0, 0.2, 40, "severe_fog"),
    ("fog", 0.0, 1.0, 40, "moderate_fog"),
    ("hail", 0.0, 10, 40, "hail"),
    ("clear", 0.5, 10, 40, "precipitation_other"),
    ("clear", 0.0, 10, -15, "severe_cold"),
])
def test_weather_indicators(cond, mm, vis, temp, expected):
    ind = WeatherMapping().indicators(weather(temp, cond, mm, vis))
    assert [WEATHER_EVENTS[i] for i in np.flatnonzero(ind)] == [expected]


def test_weather_magnitudes_skip_events_without_weather():
    v, _ = aggregate([aug(temp=40.0), aug()], np.zeros(15))
    assert v[0] == 40.0 and v[1] == 60.0


@pytest.mark.parametrize("n,expected", [(11, 1), (13, 3), (10, 0), (3, 0)])
def test_window_counts(n, expected):
    series = np.arange(n * N_FEATURES, dtype=float).reshape(n, N_FEATURES)
    assert len(build_windows(series, np.zeros(n), HexCell(0, 0))) == expected


def test_window_alignment():
    n = 15
    series = np.random.default_rng(0).normal(size=(n, N_FEATURES))
    labels = np.arange(n) % 2
    for w in build_windows(series, labels, HexCell(1, 2)):
        t = w.target_interval
        for k in range(10):
            assert np.array_equal(w.history[k], series[t - 10 + k])
        assert w.label == labels[t] and w.tile_ref == "1_2"


def test_window_arrays_match_per_cell_windows():
    rng = np.random.default_rng(1)
    cells = [HexCell(0, 0), HexCell(0, 1)]
    values = rng.normal(size=(2, 14, N_FEATURES))
    labels = rng.integers(0, 2, size=(2, 14)).astype(np.int8)
    seq, y, ci, tg = window_arrays(FeatureTable(cells, 0, values, labels))
    ref = [w for i, c in enumerate(cells) for w in build_windows(values[i], labels[i], c)]
    assert len(seq) == len(ref) == 8
    for j, w in enumerate(ref):
        assert np.array_equal(seq[j], w.history) and y[j] == w.label
        assert cells[ci[j]] == w.cell and tg[j] == w.target_interval


def test_normalize_rules():
    stats = NormStats(np.array([0.0, 5.0, 2.0]), np.array([10.0, 5.0, 4.0]))
    assert np.allclose(normalize(stats, np.array([0.0, 7.0, 4.0])), [0, 0, 1])
    assert np.allclose(normalize(stats, np.array([25.0, -1.0, 1.0])), [1, 0, 0])
    assert np.allclose(normalize(stats, np.array([5.0, 5.0, 3.0])), [0.5, 0, 0.5])
    with pytest.raises(ValueError):
        NormStats(np.array([1.0]), np.array([0.0]))


@pytest.mark.parametrize("day,split", [
    ("2019-12-20", "train"), ("2020-06-01", "test"), ("2020-03-10", "val"),
    ("2016-02-01", "train"), ("2020-05-31", "val"), ("2021-01-01", None),
])
def test_temporal_ranges(day, split):
    assert split_of_date(datetime.fromisoformat(day).replace(tzinfo=timezone.utc)) == split


def test_temporal_split_by_target_start():
    targets = np.arange(0, 130)
    parts = temporal_split(targets, GRID)
    for name, idx in parts.items():
        assert all(split_of_date(interval_start(int(targets[i]), GRID)) == name for i in idx)
    assert len(np.intersect1d(parts["train"], parts["test"])) == 0


def test_split_sizes():
    assert split_sizes(10) == (6, 2, 2)
    assert split_sizes(7) == (4, 2, 1)
    for n in range(5, 200):
        sizes = split_sizes(n)
        assert sum(sizes) == n
        assert all(abs(s - n * f) < 1 for s, f in zip(sizes, (0.6, 0.2, 0.2)))


def test_spatial_split_is_partition_and_deterministic():
    cells = [HexCell(q, r) for q in range(4) for r in range(5)]
    a, b = spatial_split(cells, 3), spatial_split(list(reversed(cells)), 3)
    assert a == b
    assert sorted(a["train"] + a["val"] + a["test"]) == sorted(cells)
    assert (len(a["train"]), len(a["val"]), len(a["test"])) == (12, 4, 4)
    assert spatial_split(cells, 4) != a
    with pytest.raises(ValueError):
        spatial_split(cells[:4], 0)


def test_build_table_and_store_round_trip(tmp_path):
    c1 = HexCell(1, 0)
    lat1, lng1 = cell_center(c1, GRID)
    start = GRID.epoch_start + timedelta(hours=1)
    events = [aug(when=start, temp=30.0), aug(when=start + timedelta(days=31), lat=lat1, lng=lng1)]
    pois = [PoiRecord(lat1, lng1, "stop"), PoiRecord(lat1, lng1, "stop")]
    table = build_feature_table(events, pois, GRID, n_intervals=4)
    assert table.cells == [HexCell(0, 0), c1]
    assert table.labels.tolist() == [[1, 0, 0, 0], [0, 0, 1, 0]]
    assert np.all(table.values[1, :, 14 + POI_TAGS.index("stop")] == 2)
    norm = NormStats.fit(table.values)
    path = tmp_path / "store.bin"
    save_feature_store(table, path, GRID, norm)
    back, sidecar = load_feature_store(path)
    assert back.cells == table.cells and np.array_equal(back.labels, table.labels)
    assert np.array_equal(back.values, table.values.astype(np.float32).astype(np.float64))
    assert NormStats.from_dict(sidecar["norm_stats"]).max.tolist() == norm.max.tolist()
    assert path.stat().st_size == 2 * 4 * (12 + 4 * 59 + 1)
    raw = path.read_bytes()
    save_feature_store(table, path, GRID, norm)
    assert path.read_bytes() == raw
    path.write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        load_feature_store(path)
