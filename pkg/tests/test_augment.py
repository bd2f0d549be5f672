import io
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from roadcast.augment import (
    AugmentedEvent, ClosureType, augment_event, read_augmented, write_augmented,
)
from roadcast.augment.daylight import THRESHOLDS_DEG, daylight_flags, period_of_day, solar_altitude
from roadcast.augment.poi import POI_TAGS, PoiIndex, PoiRecord, attach_poi
from roadcast.augment.roads import (
    DEFAULT_SPEED_MPH, FALLBACK_SPEED_MPH, RoadNetwork, RoadNode, RoadWay, infer_avg_speed,
    infer_road_class, majority_class, travel_time_minutes,
)
from roadcast.augment.weather import WeatherIndex, WeatherObservation, attach_weather
from roadcast.ingest import ValidationError

from conftest import T0, great_circle_m, make_event, offset

LAT, LNG = 39.96, -83.0


def obs(station="S1", lat=LAT, lng=LNG, when=T0, temp=10.0, condition="clear"):
    return WeatherObservation(station_id=station, station_lat=lat, station_lng=lng, time=when,
                              temperature=temp, humidity=50.0, pressure=29.9, visibility=10.0,
                              wind_direction="N", wind_speed=5.0, precipitation=0.0,
                              condition=condition)


# ---- weather -------------------------------------------------------------------

def test_single_observation_is_chosen():
    o = obs()
    assert attach_weather(make_event(), WeatherIndex([o])) == o


def test_closer_in_time_wins():
    series = [obs(when=T0 + timedelta(hours=h), temp=h) for h in (-3, -1, 3)]
    assert attach_weather(make_event(), WeatherIndex(series)).temperature == -1


def test_empty_station_set_gives_missing():
    assert attach_weather(make_event(), WeatherIndex([])) is None


def test_three_stations_against_exhaustive_scan():
    rng = np.random.default_rng(3)
    stations = []
    for sid, dist in (("far", 20_000), ("near", 1_000), ("mid", 5_000)):
        lat, lng = offset(LAT, LNG, north_m=dist * 0.6, east_m=dist * 0.8)
        for _ in range(12):
            when = T0 + timedelta(minutes=int(rng.integers(-600, 600)))
            stations.append(obs(sid, lat, lng, when, temp=float(rng.normal())))
    ev = make_event()

    def key(o):
        return (round(great_circle_m(LAT, LNG, o.station_lat, o.station_lng), 3),
                abs((o.time - ev.start_time).total_seconds()), o.time)

    expected = min(stations, key=key)
    got = attach_weather(ev, WeatherIndex(stations))
    assert got == expected and got.station_id == "near"


def test_time_tie_prefers_earlier_and_distance_tie_prefers_smaller_id():
    early, late = obs(when=T0 - timedelta(hours=1)), obs(when=T0 + timedelta(hours=1))
    assert attach_weather(make_event(), WeatherIndex([late, early])) == early
    lat, lng = offset(LAT, LNG, north_m=500)
    a, b = obs("B", lat, lng), obs("A", lat, lng)
    assert attach_weather(make_event(), WeatherIndex([a, b])).station_id == "A"


def test_observation_validation():
    with pytest.raises(ValidationError):
        WeatherObservation("S", LAT, LNG, T0, 1.0, 120.0, 30.0, 10.0, "N", 1.0, 0.0, "clear")
    with pytest.raises(ValidationError):
        obs(condition="sleet")


# ---- POI -----------------------------------------------------------------------

def test_no_pois_all_false():
    assert attach_poi(make_event(), PoiIndex([])) == (False,) * 15


def test_single_signal_in_range():
    lat, lng = offset(LAT, LNG, east_m=10)
    flags = attach_poi(make_event(), PoiIndex([PoiRecord(lat, lng, "traffic_signal")]), tau=30)
    assert [t for t, f in zip(POI_TAGS, flags) if f] == ["traffic_signal"]


@pytest.mark.parametrize("seed", range(5))
def test_random_pois_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    pois = []
    for _ in range(50):
        lat, lng = offset(LAT, LNG, north_m=rng.uniform(-60, 60), east_m=rng.uniform(-60, 60))
        pois.append(PoiRecord(lat, lng, POI_TAGS[rng.integers(len(POI_TAGS))]))
    got = attach_poi(make_event(), PoiIndex(pois), tau=30)
    expected = tuple(any(p.tag == t and great_circle_m(LAT, LNG, p.lat, p.lng) <= 30 for p in pois)
                     for t in POI_TAGS)
    assert got == expected


def test_poi_rejects_bad_tau_and_tag():
    with pytest.raises(ValueError):
        attach_poi(make_event(), PoiIndex([]), tau=0)
    with pytest.raises(ValidationError):
        PoiRecord(LAT, LNG, "cafe")


# ---- daylight ------------------------------------------------------------------

def reference_altitude(lat, lng, when):
    """Low-precision solar position from the Julian date (ecliptic route)."""
    jd = when.timestamp() / 86400.0 + 2440587.5
    n = jd - 2451545.0
    L = math.radians((280.460 + 0.9856474 * n) % 360)
    g = math.radians((357.528 + 0.9856003 * n) % 360)
    lam = L + math.radians(1.915) * math.sin(g) + math.radians(0.020) * math.sin(2 * g)
    eps = math.radians(23.439 - 4e-7 * n)
    ra = math.atan2(math.cos(eps) * math.sin(lam), math.cos(lam))
    dec = math.asin(math.sin(eps) * math.sin(lam))
    gmst = math.radians((280.46061837 + 360.98564736629 * n) % 360)
    ha = gmst + math.radians(lng) - ra
    phi = math.radians(lat)
    return math.degrees(math.asin(math.sin(phi) * math.sin(dec)
                                  + math.cos(phi) * math.cos(dec) * math.cos(ha)))


def test_equinox_noon_at_equator():
    when = datetime(2020, 3, 20, 12, tzinfo=timezone.utc)
    assert reference_altitude(0.0, 0.0, when) == pytest.approx(88.0, abs=0.5)
    assert solar_altitude(0.0, 0.0, when) == pytest.approx(reference_altitude(0.0, 0.0, when), abs=0.55)
    assert period_of_day(0.0, 0.0, when) == (True,) * 4


def test_altitude_agrees_with_reference_on_random_samples():
    rng = np.random.default_rng(11)
    base = datetime(2016, 1, 1, tzinfo=timezone.utc)
    errors = []
    for _ in range(2000):
        lat, lng = rng.uniform(-60, 60), rng.uniform(-180, 180)
        when = base + timedelta(seconds=int(rng.integers(0, 5 * 365 * 86400)))
        errors.append(abs(solar_altitude(lat, lng, when) - reference_altitude(lat, lng, when)))
    # the fractional-year declination series drifts most around the equinoxes
    assert max(errors) < 0.55 and np.median(errors) < 0.2


@pytest.mark.parametrize("alt,expected", [
    (10.0, (True, True, True, True)),
    (-3.0, (False, True, True, True)),
    (-10.0, (False, False, True, True)),
    (-15.0, (False, False, False, True)),
    (-30.0, (False, False, False, False)),
    (-0.833, (False, True, True, True)),  # strict threshold
])
def test_threshold_examples(alt, expected):
    assert daylight_flags(alt) == expected


def test_flags_monotone_on_random_instants():
    rng = np.random.default_rng(5)
    base = datetime(2016, 1, 1, tzinfo=timezone.utc)
    for _ in range(10_000):
        when = base + timedelta(seconds=int(rng.integers(0, 4 * 365 * 86400)))
        f = period_of_day(rng.uniform(-89, 89), rng.uniform(-180, 180), when)
        assert all(b or not a for a, b in zip(f, f[1:]))
    assert THRESHOLDS_DEG == (-0.833, -6.0, -12.0, -18.0)


# ---- road class and speed --------------------------------------------------------

def network(specs, start_id=1):
    """specs: list of (road_class, north_m, maxspeed); one two-node way each."""
    nodes, ways = [], []
    nid = start_id
    for wid, (cls, north, speed) in enumerate(specs, 1):
        a = RoadNode(nid, *offset(LAT, LNG, north_m=north))
        b = RoadNode(nid + 1, *offset(LAT, LNG, north_m=north, east_m=400))
        nodes += [a, b]
        ways.append(RoadWay(wid, (a.node_id, b.node_id), cls, speed))
        nid += 2
    return RoadNetwork(nodes, ways)


def test_single_primary_way():
    cls, ways = infer_road_class(make_event(), network([("primary", 5, None)]))
    assert cls == "primary" and len(ways) == 1


def test_majority_vote_against_count_oracle():
    net = network([("motorway", 5, None), ("motorway", 10, None), ("residential", 15, None)])
    cls, ways = infer_road_class(make_event(), net)
    counts = {c: sum(w.road_class == c for w in ways) for c in {w.road_class for w in ways}}
    assert cls == max(counts, key=counts.get) == "motorway"


def test_nothing_within_radius_is_unresolved():
    cls, ways = infer_road_class(make_event(), network([("primary", 60, None)]), d=50)
    assert (cls, ways) == ("other", [])


def test_ties_follow_class_priority():
    net = network([("residential", 5, None), ("trunk", 8, None)])
    assert infer_road_class(make_event(), net)[0] == "trunk"
    assert majority_class([]) == "other"


def test_end_point_adds_candidates():
    net = network([("primary", 5, None), ("secondary", 2000, None), ("secondary", 2010, None)])
    end = offset(LAT, LNG, north_m=2005)
    ev = make_event(end_lat=end[0], end_lng=end[1])
    assert infer_road_class(ev, net)[0] == "secondary"


def test_speed_from_declared_maxspeed_and_fallbacks():
    ways = [RoadWay(1, (1, 2), "primary", 40.0), RoadWay(2, (2, 3), "primary", 50.0),
            RoadWay(3, (3, 4), "primary", None)]
    assert infer_avg_speed("primary", ways) == 45.0
    assert infer_avg_speed("primary", ways[2:]) == DEFAULT_SPEED_MPH["primary"]
    assert infer_avg_speed("footway", []) == FALLBACK_SPEED_MPH
    assert travel_time_minutes(2.0, 40.0) == 3.0
    assert travel_time_minutes(None, 40.0) is None


def test_way_validation():
    with pytest.raises(ValidationError):
        RoadWay(1, (1,), "primary")
    with pytest.raises(ValidationError):
        RoadWay(1, (1, 2), "highway")


# ---- full record -----------------------------------------------------------------

def test_augment_and_round_trip():
    lat, lng = offset(LAT, LNG, east_m=10)
    ev = make_event(description="Right lane closed due to construction work", distance=1.5,
                    extra={"city": "Columbus"})
    aug = augment_event(ev, WeatherIndex([obs(when=T0 + timedelta(minutes=20))]),
                        PoiIndex([PoiRecord(lat, lng, "stop")]), network([("tertiary", 5, 30.0)]))
    assert aug.closure is ClosureType.LANE and aug.road_class == "tertiary" and aug.road_resolved
    assert aug.avg_speed == 30.0 and aug.travel_time == 3.0 and aug.start_lat == LAT
    missing = augment_event(make_event("e2"), WeatherIndex([]), PoiIndex([]), network([]))
    assert missing.weather is None and not missing.road_resolved and missing.road_class == "other"
    buf = io.StringIO()
    write_augmented([aug, missing], buf)
    assert read_augmented(io.StringIO(buf.getvalue())) == [aug, missing]


def test_augmented_invariants():
    kw = dict(event=make_event(), closure=ClosureType.NONE, weather=None, poi_flags=(False,) * 15,
              road_class="other", road_resolved=False, avg_speed=25.0, travel_time=None)
    with pytest.raises(ValidationError):
        AugmentedEvent(daylight=(True, False, True, True), **kw)
    with pytest.raises(ValidationError):
        AugmentedEvent(daylight=(True,) * 4, **{**kw, "avg_speed": 0.0})
