import math
import sys
from datetime import datetime, timedelta, timezone

import pytest

from roadcast.ingest import RawEvent

T0 = datetime(2020, 5, 4, 15, 0, tzinfo=timezone.utc)


def great_circle_m(lat1, lng1, lat2, lng2):
    """Spherical Vincenty formula; an independent check on the haversine helper."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lng2 - lng1)
    num = math.hypot(math.cos(p2) * math.sin(dl),
                     math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl))
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return 6_371_000.0 * math.atan2(num, den)


def offset(lat, lng, north_m=0.0, east_m=0.0):
    """Point displaced by small metric offsets (spherical Earth)."""
    dlat = math.degrees(north_m / 6_371_000.0)
    dlng = math.degrees(east_m / (6_371_000.0 * math.cos(math.radians(lat))))
    return lat + dlat, lng + dlng


def make_event(id="e1", lat=39.96, lng=-83.0, when=T0, description="Road work", source="Bing",
               minutes=0, **kw):
    return RawEvent(id=id, source=source, severity=kw.pop("severity", 2),
                    start_time=when + timedelta(minutes=minutes), start_lat=lat, start_lng=lng,
                    description=description, **kw)


@pytest.fixture
def event_factory():
    return make_event


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
