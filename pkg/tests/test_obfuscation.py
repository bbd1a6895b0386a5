from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobisynth.geo import GeoPoint, haversine_distance
from mobisynth.obfuscation import (BLOCK_GRID_M, CITY_GRID_M, FudgerState, cell_half_diagonal_m, draw_offset,
                                   epoch_of, fudge, fudge_bound_m, offset_max, on_lattice, roll_offset, snap)

points = st.builds(GeoPoint, st.floats(-80, 80), st.floats(-179.9, 179.9))
grids = st.sampled_from([BLOCK_GRID_M, 2000.0, CITY_GRID_M])


def test_offset_max_is_quarter_grid():
    assert offset_max(2000.0) == 500.0


def test_pure_within_hour():
    s = FudgerState(500.0, seed=3)
    p = GeoPoint(48.137, 11.575)
    assert fudge(p, s, 7200.0) == fudge(p, s, 7200.0 + 3599)


def test_snap_idempotent_at_zero_offset():
    p = GeoPoint(48.137, 11.575)
    q = snap(p, 500.0)
    assert snap(q, 500.0) == q


@settings(max_examples=200)
@given(points, grids, st.integers(0, 2**40), st.floats(0, 1e9))
def test_fudge_properties(p, grid, seed, now):
    s = FudgerState(grid, seed=seed)
    q = fudge(p, s, now)
    assert on_lattice(q, grid)
    assert haversine_distance(p, q) <= fudge_bound_m(q, grid) + 1e-6


def test_grids_give_own_lattices():
    p = GeoPoint(48.137, 11.575)
    a, b = snap(p, 500.0), snap(p, 5000.0)
    assert on_lattice(a, 500.0) and on_lattice(b, 5000.0)
    assert a != b


def test_roll_offset():
    s = roll_offset(FudgerState(1000.0, seed=1), 10.0)
    assert roll_offset(s, 3000.0) is s
    s2 = roll_offset(s, 3700.0)
    assert s2.epoch == 1 and s2.offset != s.offset


def test_consecutive_hours_differ_and_stay_bounded():
    offs = [draw_offset(9, ep, 2000.0) for ep in range(100)]
    assert len(set(offs)) == 100
    assert max(math.hypot(*o) for o in offs) <= offset_max(2000.0)


def test_offset_is_uniform_on_disk():
    offs = np.array([draw_offset(1, ep, 4000.0) for ep in range(4000)])
    r = np.hypot(offs[:, 0], offs[:, 1]) / offset_max(4000.0)
    # P(r <= 1/sqrt(2)) = 1/2 for a uniform disk
    assert abs(np.mean(r <= 1 / math.sqrt(2)) - 0.5) < 0.03


def test_epoch():
    assert epoch_of(3599.9) == 0 and epoch_of(3600.0) == 1 and epoch_of(-1.0) == -1


def test_state_validation():
    with pytest.raises(ValueError):
        FudgerState(0.0)
    with pytest.raises(ValueError):
        FudgerState(100.0, offset=(30.0, 0.0))


def test_half_diagonal_roughly_grid_over_sqrt2():
    c = snap(GeoPoint(48.0, 11.0), 1000.0)
    assert cell_half_diagonal_m(c, 1000.0) == pytest.approx(1000.0 / math.sqrt(2), rel=0.01)


def test_near_antimeridian_and_poles():
    for p in [GeoPoint(10.0, 179.99), GeoPoint(-10.0, -179.99), GeoPoint(89.99, 0.0), GeoPoint(-89.99, 45.0)]:
        q = snap(p, 5000.0)
        assert on_lattice(q, 5000.0)
