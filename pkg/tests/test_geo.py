from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from mobisynth.geo import (GeoPoint, Polyline, bearing_deg, concat_polylines, haversine_distance,
                           heading_change_deg, interpolate_along, lerp, offset_point)

lats = st.floats(-80, 80)
lons = st.floats(-179, 179)
points = st.builds(GeoPoint, lats, lons)


def test_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 181.0)


def test_coerces_numpy_floats_to_python():
    import numpy as np
    p = GeoPoint(np.float64(1.5), np.float32(2.0))
    assert type(p.lat) is float and type(p.lon) is float


def test_one_degree_of_latitude():
    d = haversine_distance(GeoPoint(0, 0), GeoPoint(1, 0))
    assert d == pytest.approx(111_195, rel=1e-4)


@given(points, points)
def test_haversine_symmetric_nonnegative(a, b):
    d = haversine_distance(a, b)
    assert d >= 0
    assert d == pytest.approx(haversine_distance(b, a), abs=1e-6)


@given(points, points, points)
def test_triangle_inequality(a, b, c):
    assert haversine_distance(a, c) <= haversine_distance(a, b) + haversine_distance(b, c) + 1e-6


def test_bearings():
    o = GeoPoint(0, 0)
    assert bearing_deg(o, GeoPoint(1, 0)) == pytest.approx(0.0)
    assert bearing_deg(o, GeoPoint(0, 1)) == pytest.approx(90.0)
    assert bearing_deg(o, GeoPoint(-1, 0)) == pytest.approx(180.0)
    assert bearing_deg(o, GeoPoint(0, -1)) == pytest.approx(270.0)


@given(st.floats(0, 360), st.floats(0, 360))
def test_heading_change_folded(b1, b2):
    d = heading_change_deg(b1, b2)
    assert 0 <= d <= 180
    assert d == pytest.approx(heading_change_deg(b2, b1))


@given(points, st.floats(-2000, 2000), st.floats(-2000, 2000))
def test_offset_point_distance(p, n, e):
    q = offset_point(p, n, e)
    assert haversine_distance(p, q) == pytest.approx(math.hypot(n, e), rel=2e-3, abs=1e-6)


def test_lerp_endpoints_exact():
    a, b = GeoPoint(1, 2), GeoPoint(3, 4)
    assert lerp(a, b, 0) is a
    assert lerp(a, b, 1) is b


def test_polyline_interpolation():
    pl = Polyline((GeoPoint(0, 0), GeoPoint(0.001, 0), GeoPoint(0.001, 0.001)))
    assert pl.cumulative_m[0] == 0.0
    assert interpolate_along(pl, 0.0) == pl.points[0]
    assert interpolate_along(pl, pl.cumulative_m[1]) == pl.points[1]
    assert interpolate_along(pl, pl.length_m) == pl.points[2]
    mid = interpolate_along(pl, pl.cumulative_m[1] / 2)
    assert mid.lat == pytest.approx(0.0005)
    with pytest.raises(ValueError):
        interpolate_along(pl, pl.length_m + 1)
    with pytest.raises(ValueError):
        interpolate_along(pl, -0.1)


@given(st.floats(0, 1))
def test_interpolation_is_monotone_in_arc_length(f):
    pl = Polyline((GeoPoint(0, 0), GeoPoint(0.002, 0), GeoPoint(0.004, 0)))
    p = interpolate_along(pl, f * pl.length_m)
    assert haversine_distance(pl.points[0], p) == pytest.approx(f * pl.length_m, abs=1e-6)


def test_concat_drops_shared_joint():
    a = Polyline((GeoPoint(0, 0), GeoPoint(0, 0.001)))
    b = Polyline((GeoPoint(0, 0.001), GeoPoint(0, 0.002)))
    c = concat_polylines([a, b])
    assert len(c) == 3
    assert c.length_m == pytest.approx(a.length_m + b.length_m)
