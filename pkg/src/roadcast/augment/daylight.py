"""Day/night labels under the four twilight systems.

Solar altitude comes from the NOAA low-accuracy fractional-year series
(within about 0.2 degrees most of the year, up to 0.55 near the equinoxes),
which is plenty away from the exact threshold instants.
"""
from __future__ import annotations

import math
from datetime import datetime, timezone

SYSTEMS = ("sunrise_sunset", "civil", "nautical", "astronomical")
THRESHOLDS_DEG = (-0.833, -6.0, -12.0, -18.0)


def solar_altitude(lat: float, lng: float, when: datetime) -> float:
    """Solar elevation angle in degrees at ``when`` (UTC) for a point."""
    t = when.astimezone(timezone.utc)
    days_in_year = 366 if (t.year % 4 == 0 and (t.year % 100 != 0 or t.year % 400 == 0)) else 365
    hour = t.hour + t.minute / 60.0 + t.second / 3600.0
    g = 2.0 * math.pi / days_in_year * (t.timetuple().tm_yday - 1 + (hour - 12.0) / 24.0)

    eqtime = 229.18 * (
        0.000075 + 0.001868 * math.cos(g) - 0.032077 * math.sin(g)
        - 0.014615 * math.cos(2 * g) - 0.040849 * math.sin(2 * g)
    )
    decl = (
        0.006918 - 0.399912 * math.cos(g) + 0.070257 * math.sin(g)
        - 0.006758 * math.cos(2 * g) + 0.000907 * math.sin(2 * g)
        - 0.002697 * math.cos(3 * g) + 0.00148 * math.sin(3 * g)
    )
    true_solar_minutes = hour * 60.0 + eqtime + 4.0 * lng
    hour_angle = math.radians(true_solar_minutes / 4.0 - 180.0)
    phi = math.radians(lat)
    cos_zenith = math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(hour_angle)
    zenith = math.degrees(math.acos(max(-1.0, min(1.0, cos_zenith))))
    return 90.0 - zenith


def daylight_flags(altitude: float) -> tuple[bool, bool, bool, bool]:
    """True means day; ordered as ``SYSTEMS``."""
    return tuple(altitude > th for th in THRESHOLDS_DEG)


def period_of_day(lat: float, lng: float, when: datetime) -> tuple[bool, bool, bool, bool]:
    return daylight_flags(solar_altitude(lat, lng, when))
