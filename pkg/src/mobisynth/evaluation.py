"""Temporal features, perturbation probes and a k-NN baseline."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .geo import haversine_distance, offset_point
from .kinematics import Fix
from .pipeline import Trajectory

IDLE_SPEED_MPS = 0.5


@dataclass(frozen=True)
class FeatureVector:
    max_accel: float
    min_accel: float
    mean_accel: float
    std_accel: float
    mean_abs_accel: float
    std_abs_accel: float
    max_speed: float
    idle_time_s: float
    distance_m: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), float)


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))


def _fixes(t: Trajectory | Sequence[Fix]) -> Sequence[Fix]:
    return t.fixes if isinstance(t, Trajectory) else t


def fix_kinematics(fx: Sequence[Fix]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times, speeds and accelerations; differenced where annotations are missing."""
    ts = np.array([f.t for f in fx], float)
    dt = np.diff(ts)
    if np.any(dt <= 0):
        raise ValueError("fix timestamps must strictly increase")
    if all(f.speed is not None for f in fx):
        v = np.array([f.speed for f in fx], float)
    else:
        step = np.array([haversine_distance(a.point, b.point) for a, b in zip(fx, fx[1:])])
        v = np.concatenate(([0.0], step / dt))
    if all(f.accel is not None for f in fx):
        a = np.array([f.accel for f in fx], float)
    else:
        a = np.concatenate(([0.0], np.diff(v) / dt))
    return ts, v, a


def extract_features(t: Trajectory | Sequence[Fix], idle_speed: float = IDLE_SPEED_MPS) -> FeatureVector:
    """The 9 temporal features of a trajectory or drive segment.

    Idle time counts the seconds between consecutive fixes that begin
    below ``idle_speed``.
    """
    fx = _fixes(t)
    if len(fx) < 2:
        raise ValueError("need at least two fixes")
    ts, v, a = fix_kinematics(fx)
    ab = np.abs(a)
    idle = float(np.sum(np.diff(ts)[v[:-1] < idle_speed]))
    dist = float(sum(haversine_distance(p.point, q.point) for p, q in zip(fx, fx[1:])))
    return FeatureVector(float(a.max()), float(a.min()), float(a.mean()), float(a.std()),
                         float(ab.mean()), float(ab.std()), float(v.max()), idle, dist)


def perturb(t: Trajectory, speed_factor: float = 1.0, teleport_sigma_m: float = 0.0,
            rng_seed: int = 0) -> Trajectory:
    """Time-compress by ``speed_factor`` and add gaussian position noise.

    Times are compressed about the first fix, so the duration divides by
    the factor while speeds scale by it and accelerations by its square.
    """
    if speed_factor < 1:
        raise ValueError("speed factor must be at least 1")
    if teleport_sigma_m < 0:
        raise ValueError("teleport sigma must be nonnegative")
    if speed_factor == 1 and teleport_sigma_m == 0:
        return t
    fx = t.fixes
    t0 = fx[0].t if fx else 0.0
    f = float(speed_factor)
    out = [Fix(t0 + (x.t - t0) / f, x.point,
               None if x.speed is None else x.speed * f,
               None if x.accel is None else x.accel * f * f) for x in fx]
    if teleport_sigma_m > 0:
        d = np.random.default_rng(rng_seed).normal(0.0, teleport_sigma_m, (len(out), 2))
        out = [replace(x, point=offset_point(x.point, float(n), float(e))) for x, (n, e) in zip(out, d)]
    return replace(t, fixes=tuple(out))


def drive_abs_accels(t: Trajectory) -> np.ndarray:
    """``|a|`` per driven second; each drive's initial rest fix is skipped."""
    vals = [abs(f.accel) for seg in t.drive_segments() for f in seg[1:] if f.accel is not None]
    return np.array(vals, float)


def summarize_abs_accel(routes: Iterable[Trajectory | np.ndarray | Sequence[float]]) -> tuple[float, float, float]:
    """Pooled mean, median and std of ``|a|``.

    Items may be trajectories (their drive seconds are used) or raw
    acceleration arrays.
    """
    parts = []
    for r in routes:
        parts.append(drive_abs_accels(r) if isinstance(r, Trajectory) else np.abs(np.asarray(r, float)))
    if not parts:
        raise ValueError("no routes to summarize")
    x = np.concatenate(parts)
    if x.size == 0:
        raise ValueError("routes contain no acceleration samples")
    return float(x.mean()), float(np.median(x)), float(x.std())


def _standardize(train: np.ndarray, *others: np.ndarray) -> list[np.ndarray]:
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0] = 1.0
    return [(m - mu) / sd for m in (train, *others)]


def _vote(dist_row: np.ndarray, labels: np.ndarray, k: int):
    order = np.argsort(dist_row, kind="stable")[:k]
    vals, counts = np.unique(labels[order], return_counts=True)
    top = counts.max()
    winners = vals[counts == top]
    if len(winners) == 1:
        return winners[0]
    return labels[order[0]]


def knn_classify(train_x: Sequence[FeatureVector] | np.ndarray, train_y: Sequence, k: int,
                 query: FeatureVector | np.ndarray):
    """Majority label of the ``k`` nearest training vectors after z-scoring.

    Vote ties go to the label of the single nearest neighbour.
    """
    X = _as_matrix(train_x)
    y = np.asarray(train_y)
    if len(X) == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= len(X):
        raise ValueError("k must be between 1 and the training set size")
    q = query.as_array() if isinstance(query, FeatureVector) else np.asarray(query, float)
    Xs, qs = _standardize(X, q[None, :])
    d = np.sqrt(((Xs - qs) ** 2).sum(axis=1))
    return _vote(d, y, k).item()


def _as_matrix(vs: Sequence[FeatureVector] | np.ndarray) -> np.ndarray:
    if isinstance(vs, np.ndarray):
        return vs.astype(float).reshape(len(vs), -1)
    return np.array([v.as_array() for v in vs], float).reshape(len(vs), -1)


def holdout_accuracy(x: Sequence[FeatureVector] | np.ndarray, y: Sequence, k: int, iterations: int = 1000,
                     test_fraction: float = 0.1, rng_seed: int = 0) -> float:
    """Mean held-out k-NN accuracy over random train/test splits."""
    X = _as_matrix(x)
    y = np.asarray(y)
    n = len(X)
    n_test = max(1, int(round(n * test_fraction)))
    if n - n_test < k:
        raise ValueError("training split smaller than k")
    rng = np.random.default_rng(rng_seed)
    accs = np.empty(iterations)
    for it in range(iterations):
        perm = rng.permutation(n)
        te, tr = perm[:n_test], perm[n_test:]
        Xtr, Xte = _standardize(X[tr], X[te])
        d = np.sqrt(((Xte[:, None, :] - Xtr[None, :, :]) ** 2).sum(axis=2))
        pred = np.array([_vote(row, y[tr], k) for row in d])
        accs[it] = np.mean(pred == y[te])
    return float(accs.mean())


def write_features_csv(dest: str | Path | IO[str], vectors: Iterable[FeatureVector]) -> None:
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_NAMES)
        for v in vectors:
            w.writerow([repr(float(x)) for x in astuple(v)])
    finally:
        if own:
            fh.close()


def read_features_csv(src: str | Path | IO[str]) -> list[FeatureVector]:
    text = Path(src).read_text() if isinstance(src, (str, Path)) else src.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != FEATURE_NAMES:
        raise ValueError("unexpected feature CSV header")
    return [FeatureVector(*(float(c) for c in r)) for r in rows[1:] if r]


def finite(v: FeatureVector) -> bool:
    return all(math.isfinite(x) for x in astuple(v))
