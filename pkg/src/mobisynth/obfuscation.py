"""Coarse-location fudger: hourly random offset, then snap to a fixed lattice.

The lattice is anchored at (0, 0). Rows are ``grid_m`` tall; each row's
cells are ``grid_m`` wide at the row's centre latitude. Snapped points are
cell centres, so every caller in the same cell sees the same location.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geo import GeoPoint, haversine_distance, offset_point

METERS_PER_DEG_LAT = 111_195.0
HOUR_S = 3600.0
DEFAULT_GRID_M = 2000.0
BLOCK_GRID_M = 500.0
CITY_GRID_M = 5000.0
# keeps longitude cells finite near the poles
_MIN_COS = 1e-6


def offset_max(grid_m: float) -> float:
    return grid_m / 4.0


def epoch_of(now: float) -> int:
    return math.floor(now / HOUR_S)


def draw_offset(seed: int, epoch: int, grid_m: float) -> tuple[float, float]:
    """Uniform point in the disk of radius ``offset_max``, fixed by (seed, epoch)."""
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, epoch & 0xFFFFFFFFFFFFFFFF])
    u, w = rng.random(2)
    r = offset_max(grid_m) * math.sqrt(u)
    theta = 2.0 * math.pi * w
    return r * math.cos(theta), r * math.sin(theta)


@dataclass(frozen=True)
class FudgerState:
    grid_radius_m: float = DEFAULT_GRID_M
    offset: tuple[float, float] = (0.0, 0.0)
    epoch: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.grid_radius_m > 0:
            raise ValueError("grid radius must be positive")
        if math.hypot(*self.offset) > offset_max(self.grid_radius_m) * (1 + 1e-12):
            raise ValueError("offset longer than a quarter cell")


def roll_offset(state: FudgerState, now: float) -> FudgerState:
    """State for ``now``'s hour bucket; unchanged if already there."""
    ep = epoch_of(now)
    if state.epoch == ep:
        return state
    return replace(state, offset=draw_offset(state.seed, ep, state.grid_radius_m), epoch=ep)


def lat_step(grid_m: float) -> float:
    return grid_m / METERS_PER_DEG_LAT


def lon_step(grid_m: float, center_lat: float) -> float:
    return min(360.0, grid_m / (METERS_PER_DEG_LAT * max(math.cos(math.radians(center_lat)), _MIN_COS)))


def snap(p: GeoPoint, grid_m: float) -> GeoPoint:
    """Centre of the lattice cell containing ``p``."""
    dlat = lat_step(grid_m)
    i = math.floor(p.lat / dlat)
    # keep the row centre on the globe
    i = max(min(i, math.floor(90.0 / dlat - 0.5)), math.ceil(-90.0 / dlat - 0.5))
    clat = (i + 0.5) * dlat
    dlon = lon_step(grid_m, clat)
    j = math.floor(p.lon / dlon)
    clon = (j + 0.5) * dlon
    if clon >= 180.0:
        clon -= 360.0
    return GeoPoint(clat, clon)


def on_lattice(p: GeoPoint, grid_m: float, tol: float = 1e-7) -> bool:
    """True when ``p`` is a cell centre of the lattice for ``grid_m``."""
    dlat = lat_step(grid_m)
    fi = p.lat / dlat - 0.5
    if abs(fi - round(fi)) > tol:
        return False
    dlon = lon_step(grid_m, p.lat)
    # centres past the antimeridian are stored wrapped by -360
    for lon in (p.lon, p.lon + 360.0):
        fj = lon / dlon - 0.5
        if abs(fj - round(fj)) <= tol:
            return True
    return False


def cell_half_diagonal_m(center: GeoPoint, grid_m: float) -> float:
    """Largest distance from a cell centre to its corners."""
    hl = lat_step(grid_m) / 2.0
    hn = lon_step(grid_m, center.lat) / 2.0
    corners = [GeoPoint(max(-90.0, min(90.0, center.lat + a)), ((center.lon + b + 180.0) % 360.0) - 180.0)
               for a in (-hl, hl) for b in (-hn, hn)]
    return max(haversine_distance(center, c) for c in corners)


def fudge(p: GeoPoint, state: FudgerState, now: float) -> GeoPoint:
    """Coarse location for ``p`` at time ``now``."""
    st = roll_offset(state, now)
    north, east = st.offset
    return snap(offset_point(p, north, east), st.grid_radius_m)


def fudge_bound_m(fudged: GeoPoint, grid_m: float) -> float:
    """Upper bound on the distance between a true point and its fudged output."""
    return offset_max(grid_m) + cell_half_diagonal_m(fudged, grid_m)
