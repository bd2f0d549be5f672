"""Great-circle helpers shared by the ingestion and augmentation stages."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(lat1, lng1, lat2, lng2):
    """Haversine distance in meters. Accepts scalars or broadcastable arrays."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lng2) - np.asarray(lng1))
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    if np.ndim(d) == 0:
        return float(d)
    return d


def _unit_xyz(lat, lng) -> np.ndarray:
    lat = np.radians(np.asarray(lat, dtype=float))
    lng = np.radians(np.asarray(lng, dtype=float))
    return np.stack(
        [np.cos(lat) * np.cos(lng), np.cos(lat) * np.sin(lng), np.sin(lat)], axis=-1
    )


def _chord(meters: float) -> float:
    return 2.0 * np.sin(min(meters / EARTH_RADIUS_M, np.pi) / 2.0)


class PointIndex:
    """Nearest-neighbour lookups on the sphere.

    Points live on the unit sphere in a k-d tree; chord length is monotone in
    great-circle distance, so ordering and radius queries carry over exactly.
    Reported distances are always recomputed with :func:`haversine_m`.
    """

    def __init__(self, lats, lngs):
        self.lats = np.asarray(lats, dtype=float)
        self.lngs = np.asarray(lngs, dtype=float)
        self._tree = cKDTree(_unit_xyz(self.lats, self.lngs)) if len(self.lats) else None

    def __len__(self) -> int:
        return len(self.lats)

    def within(self, lat: float, lng: float, radius_m: float) -> np.ndarray:
        """Indices of points within ``radius_m`` (inclusive), ascending."""
        if self._tree is None:
            return np.empty(0, dtype=int)
        # pad the chord so points exactly on the radius survive the exact filter
        cand = self._tree.query_ball_point(_unit_xyz(lat, lng), _chord(radius_m) * (1 + 1e-9) + 1e-12)
        cand = np.asarray(sorted(cand), dtype=int)
        if cand.size == 0:
            return cand
        d = haversine_m(lat, lng, self.lats[cand], self.lngs[cand])
        return cand[np.atleast_1d(d) <= radius_m]

    def nearest(self, lat: float, lng: float, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` nearest points as (indices, haversine meters), closest first."""
        if self._tree is None:
            return np.empty(0, dtype=int), np.empty(0)
        k = min(k, len(self))
        _, idx = self._tree.query(_unit_xyz(lat, lng), k=k)
        idx = np.atleast_1d(idx).astype(int)
        d = np.atleast_1d(haversine_m(lat, lng, self.lats[idx], self.lngs[idx]))
        order = np.lexsort((idx, d))
        return idx[order], d[order]
