"""Geographic primitives: points, great-circle distances, polylines."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

EARTH_RADIUS_M = 6_371_000.0
# meters per degree of latitude on the sphere above
METERS_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        # plain floats keep reprs and serialized output stable
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "lon", float(self.lon))
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of [-180, 180]")


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(max(0.0, h))))


def bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Initial bearing from a to b in degrees clockwise from north, in [0, 360)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return math.degrees(math.atan2(y, x)) % 360.0


def heading_change_deg(b1: float, b2: float) -> float:
    """Absolute difference between two bearings, folded into [0, 180]."""
    d = abs(b2 - b1) % 360.0
    return 360.0 - d if d > 180.0 else d


def offset_point(p: GeoPoint, north_m: float, east_m: float) -> GeoPoint:
    """Displace a point by a local north/east offset in meters.

    Uses the flat-earth approximation around ``p``; adequate for offsets of a
    few kilometers. Longitude is wrapped and latitude clamped to the poles.
    """
    lat = p.lat + north_m / METERS_PER_DEG
    coslat = math.cos(math.radians(p.lat))
    lon = p.lon + (east_m / (METERS_PER_DEG * coslat) if coslat > 1e-12 else 0.0)
    lat = min(90.0, max(-90.0, lat))
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(lat, lon)


def lerp(a: GeoPoint, b: GeoPoint, f: float) -> GeoPoint:
    """Linear interpolation in lat/lon; f=0 gives a, f=1 gives b exactly."""
    if f <= 0.0:
        return a
    if f >= 1.0:
        return b
    return GeoPoint(a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f)


@dataclass(frozen=True)
class Polyline:
    """Ordered points with their cumulative along-track distance in meters."""

    points: tuple[GeoPoint, ...]
    cumulative_m: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.points) < 1:
            raise ValueError("polyline needs at least one point")
        if not self.cumulative_m:
            object.__setattr__(self, "cumulative_m", _cumulative(self.points))
        elif len(self.cumulative_m) != len(self.points):
            raise ValueError("cumulative_m must match points in length")

    @classmethod
    def from_points(cls, points: Iterable[GeoPoint]) -> "Polyline":
        return cls(tuple(points))

    @property
    def length_m(self) -> float:
        return self.cumulative_m[-1]

    def __len__(self) -> int:
        return len(self.points)

    def interpolate(self, s: float) -> GeoPoint:
        return interpolate_along(self, s)


def _cumulative(points: Sequence[GeoPoint]) -> tuple[float, ...]:
    out = [0.0]
    for p, q in zip(points, points[1:]):
        out.append(out[-1] + haversine_distance(p, q))
    return tuple(out)


def concat_polylines(parts: Iterable[Polyline]) -> Polyline:
    """Join polylines end to end, dropping a repeated joint point."""
    pts: list[GeoPoint] = []
    for part in parts:
        seq = part.points
        if pts and seq and pts[-1] == seq[0]:
            seq = seq[1:]
        pts.extend(seq)
    return Polyline(tuple(pts))


def interpolate_along(p: Polyline, s: float) -> GeoPoint:
    """Point at arc length ``s`` meters along ``p``.

    Vertices are returned exactly when ``s`` equals their cumulative
    distance. Raises ValueError when ``s`` is outside ``[0, length]``.
    """
    total = p.cumulative_m[-1]
    if not (0.0 <= s <= total) or math.isnan(s):
        raise ValueError(f"arc length {s} outside [0, {total}]")
    cum = p.cumulative_m
    k = bisect.bisect_left(cum, s)
    if k < len(cum) and cum[k] == s:
        return p.points[k]
    # cum[k-1] < s < cum[k]
    s0, s1 = cum[k - 1], cum[k]
    return lerp(p.points[k - 1], p.points[k], (s - s0) / (s1 - s0))
