"""Geometry primitives for small lat/lon regions.

Distances are great-circle (haversine) on a sphere of mean Earth radius.
Polygons are simple rings in degrees, tested with even-odd ray casting.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0088
BUCKET_DEG = 0.01
# on-edge tolerance in degrees (~1 mm)
_EDGE_EPS = 1e-11


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class Region:
    """A polygonal area unit with its census attributes.

    The ring is stored open: the closing vertex is implicit.
    """

    id: str
    ring: tuple[GeoPoint, ...]
    area_km2: float
    population: int

    def __post_init__(self):
        ring = tuple(self.ring)
        object.__setattr__(self, "ring", ring)
        if len(set(ring)) < 3:
            raise ValueError(f"region {self.id!r}: ring needs at least 3 distinct vertices")
        if ring[0] == ring[-1]:
            raise ValueError(f"region {self.id!r}: ring must not repeat its first vertex")
        if not (self.area_km2 > 0 and math.isfinite(self.area_km2)):
            raise ValueError(f"region {self.id!r}: area must be positive, got {self.area_km2}")
        if self.population < 0:
            raise ValueError(f"region {self.id!r}: population must be >= 0")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(min_lat, min_lon, max_lat, max_lon)."""
        lats = [p.lat for p in self.ring]
        lons = [p.lon for p in self.ring]
        return min(lats), min(lons), max(lats), max(lons)


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def haversine_many(lat, lon, lats, lons) -> np.ndarray:
    """Distances from one point to arrays of points, in km."""
    phi1 = np.radians(lat)
    phi2 = np.radians(lats)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lons) - lon)
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(1.0, h)))


def _on_segment(px, py, ax, ay, bx, by) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    scale = max(abs(bx - ax), abs(by - ay), 1.0)
    if abs(cross) > _EDGE_EPS * scale:
        return False
    return (min(ax, bx) - _EDGE_EPS <= px <= max(ax, bx) + _EDGE_EPS
            and min(ay, by) - _EDGE_EPS <= py <= max(ay, by) + _EDGE_EPS)


def _ring_contains(px: float, py: float, xs: Sequence[float], ys: Sequence[float]) -> bool:
    n = len(xs)
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi, xj, yj = xs[i], ys[i], xs[j], ys[j]
        if _on_segment(px, py, xj, yj, xi, yi):
            return True
        if (yi > py) != (yj > py):
            x_cross = xi + (py - yi) * (xj - xi) / (yj - yi)
            if px < x_cross:
                inside = not inside
        j = i
    return inside


def point_in_region(p: GeoPoint, r: Region) -> bool:
    """Even-odd test in (lon, lat) space; points on an edge count as inside."""
    return _ring_contains(p.lon, p.lat, [q.lon for q in r.ring], [q.lat for q in r.ring])


class _RegionIndex:
    """Uniform bucket grid over region bounding boxes."""

    def __init__(self, regions: Sequence[Region]):
        self.regions = sorted(regions, key=lambda r: r.id)
        self.rings = [([q.lon for q in r.ring], [q.lat for q in r.ring]) for r in self.regions]
        self.bboxes = [r.bbox for r in self.regions]
        spans = [max(b[2] - b[0], b[3] - b[1]) for b in self.bboxes]
        self.cell = max(float(np.median(spans)), 1e-6)
        self.buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
        for k, (la0, lo0, la1, lo1) in enumerate(self.bboxes):
            for i in range(self._key(la0 - _EDGE_EPS), self._key(la1 + _EDGE_EPS) + 1):
                for j in range(self._key(lo0 - _EDGE_EPS), self._key(lo1 + _EDGE_EPS) + 1):
                    self.buckets[(i, j)].append(k)

    def _key(self, v: float) -> int:
        return math.floor(v / self.cell)

    def locate(self, p: GeoPoint) -> str | None:
        # candidates are in id order, so the first hit is the smallest id
        for k in self.buckets.get((self._key(p.lat), self._key(p.lon)), ()):
            la0, lo0, la1, lo1 = self.bboxes[k]
            if not (la0 - _EDGE_EPS <= p.lat <= la1 + _EDGE_EPS
                    and lo0 - _EDGE_EPS <= p.lon <= lo1 + _EDGE_EPS):
                continue
            xs, ys = self.rings[k]
            if _ring_contains(p.lon, p.lat, xs, ys):
                return self.regions[k].id
        return None


def assign_events(points: Sequence[GeoPoint], regions: Sequence[Region]
                  ) -> tuple[list[str | None], int]:
    """Map each point to the id of the region containing it.

    Points on shared borders go to the lexicographically smallest id.
    Returns the per-point ids (None when outside every region) and the
    number of unassigned points.
    """
    if not regions:
        raise ValueError("assign_events requires at least one region")
    index = _RegionIndex(regions)
    out = [index.locate(p) for p in points]
    return out, sum(1 for r in out if r is None)


def polygon_area_km2(ring: Sequence[GeoPoint]) -> float:
    """Shoelace area after an equirectangular projection about the centroid."""
    if len(ring) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    lat0 = sum(p.lat for p in ring) / len(ring)
    lon0 = sum(p.lon for p in ring) / len(ring)
    kx = math.radians(1.0) * EARTH_RADIUS_KM * math.cos(math.radians(lat0))
    ky = math.radians(1.0) * EARTH_RADIUS_KM
    xs = [(p.lon - lon0) * kx for p in ring]
    ys = [(p.lat - lat0) * ky for p in ring]
    n = len(ring)
    twice = 0.0
    for i in range(n):
        j = (i + 1) % n
        twice += xs[i] * ys[j] - xs[j] * ys[i]
    area = abs(twice) / 2.0
    extent = max(max(xs) - min(xs), max(ys) - min(ys))
    if area <= 1e-12 * max(extent * extent, 1e-300):
        raise ValueError("degenerate polygon has zero area")
    return area


def avg_min_distance_km(sources: Sequence[GeoPoint], targets: Sequence[GeoPoint]) -> float:
    """Mean over sources of the great-circle distance to the nearest target."""
    if not sources or not targets:
        raise ValueError("avg_min_distance_km needs non-empty sources and targets")
    return float(np.mean(nearest_distances_km(sources, targets)))


def nearest_distances_km(sources: Sequence[GeoPoint], targets: Sequence[GeoPoint]) -> np.ndarray:
    t_lat = np.array([t.lat for t in targets])
    t_lon = np.array([t.lon for t in targets])
    if len(sources) * len(targets) <= 50_000:
        return np.array([haversine_many(s.lat, s.lon, t_lat, t_lon).min() for s in sources])

    buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
    bi = np.floor(t_lat / BUCKET_DEG).astype(np.int64)
    bj = np.floor(t_lon / BUCKET_DEG).astype(np.int64)
    for k, key in enumerate(zip(bi.tolist(), bj.tolist())):
        buckets[key].append(k)
    idx_of = {key: np.array(v) for key, v in buckets.items()}
    n_buckets = len(idx_of)

    out = np.empty(len(sources))
    for s_i, s in enumerate(sources):
        ci, cj = math.floor(s.lat / BUCKET_DEG), math.floor(s.lon / BUCKET_DEG)
        # grow a square ring until some target is seen
        seed = None
        for radius in range(0, 64):
            found = [idx_of[(ci + di, cj + dj)]
                     for di in range(-radius, radius + 1)
                     for dj in range(-radius, radius + 1)
                     if max(abs(di), abs(dj)) == radius and (ci + di, cj + dj) in idx_of]
            if found:
                seed = np.concatenate(found)
                break
        if seed is None:
            out[s_i] = haversine_many(s.lat, s.lon, t_lat, t_lon).min()
            continue
        best = haversine_many(s.lat, s.lon, t_lat[seed], t_lon[seed]).min()
        # every target within `best` lies inside the spherical cap's bounding box
        theta = best / EARTH_RADIUS_KM
        phi = math.radians(s.lat)
        lat_lo = s.lat - math.degrees(theta)
        lat_hi = s.lat + math.degrees(theta)
        if abs(phi) + theta >= math.pi / 2 - 1e-9:
            out[s_i] = haversine_many(s.lat, s.lon, t_lat, t_lon).min()
            continue
        dlon = math.degrees(math.asin(min(1.0, math.sin(theta) / math.cos(phi))))
        i0, i1 = math.floor(lat_lo / BUCKET_DEG), math.floor(lat_hi / BUCKET_DEG)
        j0, j1 = math.floor((s.lon - dlon) / BUCKET_DEG), math.floor((s.lon + dlon) / BUCKET_DEG)
        if (i1 - i0 + 1) * (j1 - j0 + 1) > 4 * n_buckets:
            out[s_i] = haversine_many(s.lat, s.lon, t_lat, t_lon).min()
            continue
        cand = [idx_of[(i, j)] for i in range(i0, i1 + 1) for j in range(j0, j1 + 1)
                if (i, j) in idx_of]
        cand = np.concatenate(cand)
        out[s_i] = haversine_many(s.lat, s.lon, t_lat[cand], t_lon[cand]).min()
    return out


def points_from(pairs: Iterable[tuple[float, float]]) -> list[GeoPoint]:
    return [GeoPoint(lat, lon) for lat, lon in pairs]
