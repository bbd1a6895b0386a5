from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mobisynth.evaluation import (FEATURE_NAMES, FeatureVector, extract_features, fix_kinematics,
                                  holdout_accuracy, knn_classify, perturb, read_features_csv,
                                  summarize_abs_accel, write_features_csv)
from mobisynth.geo import GeoPoint, haversine_distance, offset_point
from mobisynth.kinematics import Fix
from mobisynth.pipeline import Segment, SegmentKind, Trajectory

O = GeoPoint(48.1, 11.5)


def straight(n=30, v=10.0, t0=1000.0):
    return [Fix(t0 + k, offset_point(O, 0, v * k), v, 0.0) for k in range(n)]


def traj(fixes):
    return Trajectory(tuple(fixes), (Segment(SegmentKind.DRIVE, 0, len(fixes)),))


def test_uniform_motion_features():
    f = extract_features(straight())
    assert len(f.as_array()) == 9 == len(FEATURE_NAMES)
    assert f.std_accel == 0 and f.max_speed == 10 and f.idle_time_s == 0
    assert f.distance_m == pytest.approx(290.0, abs=1e-6)


def test_stationary_features():
    fx = [Fix(float(k), O, 0.0, 0.0) for k in range(0, 600, 60)]
    f = extract_features(fx)
    assert f.distance_m == 0.0 and f.idle_time_s == 540.0


def test_differencing_without_annotations():
    fx = [Fix(float(k), offset_point(O, 0, 5.0 * k * k / 2)) for k in range(5)]
    ts, v, a = fix_kinematics(fx)
    assert v[1:] == pytest.approx([2.5, 7.5, 12.5, 17.5], abs=1e-3)
    assert a[2:] == pytest.approx([5.0, 5.0, 5.0], abs=1e-3)


def test_needs_two_fixes_and_order():
    with pytest.raises(ValueError):
        extract_features(straight(1))
    fx = straight(3)
    with pytest.raises(ValueError):
        extract_features([fx[1], fx[0], fx[2]])


def test_time_shift_invariance():
    a = extract_features(straight(t0=0.0))
    b = extract_features(straight(t0=5e8))
    assert a == b


def test_perturb_identity():
    t = traj(straight())
    assert perturb(t) is t


def test_perturb_factor_five():
    fx = [Fix(1_700_000_000.0 + k, offset_point(O, 0, k * k * 0.3), 0.6 * k, 0.6) for k in range(50)]
    t = traj(fx)
    p = perturb(t, 5.0)
    assert extract_features(p).max_speed == 5 * extract_features(t).max_speed
    # absolute epoch timestamps resolve to about 2.4e-7 s near 1.7e9
    assert abs(p.duration_s - t.duration_s / 5) <= 2 * np.spacing(fx[-1].t)
    assert [f.speed for f in p.fixes] == [f.speed * 5 for f in fx]


def test_teleport_noise_scale():
    fx = [Fix(float(k), O, 0.0, 0.0) for k in range(10_000)]
    p = perturb(traj(fx), 1.0, 1000.0, rng_seed=3)
    dn = np.array([(f.point.lat - O.lat) * 111_195 for f in p.fixes])
    assert 900 <= dn.std() <= 1100
    d = np.array([haversine_distance(O, f.point) for f in p.fixes])
    assert np.mean(d) == pytest.approx(1000 * np.sqrt(np.pi / 2), rel=0.05)


def test_perturb_validation():
    with pytest.raises(ValueError):
        perturb(traj(straight()), 0.5)
    with pytest.raises(ValueError):
        perturb(traj(straight()), 1.0, -1.0)


def test_summary_constant():
    assert summarize_abs_accel([np.full(10, 0.5), np.full(5, -0.5)]) == (0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        summarize_abs_accel([])


@given(st.lists(st.lists(st.floats(-7, 7), min_size=1, max_size=20), min_size=1, max_size=6), st.randoms())
def test_summary_order_invariant(parts, rnd):
    shuffled = parts[:]
    rnd.shuffle(shuffled)
    a, b = summarize_abs_accel(parts), summarize_abs_accel(shuffled)
    assert a == pytest.approx(b)


def test_summary_skips_rest_fix_of_drives():
    fx = [Fix(0.0, O, 0.0, 0.0)] + [Fix(float(k), O, 1.0, 0.5) for k in range(1, 5)]
    assert summarize_abs_accel([traj(fx)]) == (0.5, 0.5, 0.0)


def fv(*xs):
    return FeatureVector(*xs, *([0.0] * (9 - len(xs))))


def test_knn_duplicate_and_ties():
    train = [fv(0.0), fv(1.0), fv(2.0), fv(10.0)]
    labels = ["a", "b", "b", "a"]
    assert knn_classify(train, labels, 1, fv(1.0)) == "b"
    # two-two tie at k=4 goes to the nearest neighbour
    assert knn_classify(train, labels, 4, fv(0.1)) == "a"
    with pytest.raises(ValueError):
        knn_classify([], [], 1, fv(0.0))
    with pytest.raises(ValueError):
        knn_classify(train, labels, 5, fv(0.0))


def test_knn_standardizes_with_training_stats():
    train = np.array([[0.0, 0.0], [0.0, 1000.0], [1.0, 0.0], [1.0, 1000.0]])
    # raw distance would be dominated by the second column
    assert knn_classify(train, [0, 0, 1, 1], 1, np.array([0.9, 400.0])) == 1


def test_null_model_accuracy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 9))
    y = np.array([0, 1] * 100)
    for k in (1, 10):
        assert 0.4 <= holdout_accuracy(x, y, k, 300, rng_seed=1) <= 0.6


def test_separable_classes_are_found():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(0, 1, (50, 9)), rng.normal(5, 1, (50, 9))])
    y = [0] * 50 + [1] * 50
    assert holdout_accuracy(x, y, 1, 50) > 0.95


def test_features_csv_roundtrip(tmp_path):
    vs = [extract_features(straight()), fv(1.5, -2.25)]
    p = tmp_path / "f.csv"
    write_features_csv(p, vs)
    assert p.read_text().splitlines()[0] == ",".join(FEATURE_NAMES)
    assert read_features_csv(p) == vs
    with pytest.raises(ValueError):
        read_features_csv(io.StringIO("a,b\n1,2\n"))
