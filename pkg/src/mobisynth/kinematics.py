"""Per-second acceleration profiles for route steps, walks, and GPS noise.

Each route step gets an acceleration vector ``a`` (one value per whole
second of the step) found by sequential quadratic programming: the mean
speed must match the step's traffic speed while the distribution of ``|a|``
stays inside the bounds measured from real driving. Speeds follow
``v_j = v_{j-1} + a_j``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import StepSynthesisError
from .geo import GeoPoint, concat_polylines, haversine_distance, interpolate_along, lerp, offset_point
from .traffic import RouteStep

log = logging.getLogger(__name__)

EQ_TOL = 1e-6
INEQ_TOL = 1e-6
# interior margin kept by the solver so the audit passes after rounding
SOLVER_MARGIN = 1e-4
WALK_SPEED_MPS = 1.4
# steps need mean speed <= FEASIBLE_RATIO * whole seconds to leave room for
# ramps from and back to rest under the |a| bounds (hard limit is ~0.41)
FEASIBLE_RATIO = 0.3
MIN_STEP_S = 10
WARM_RESTARTS = 3
GUESS_TAIL_DOF = 3.0


@dataclass(frozen=True)
class DrivingStats:
    mean_abs_bounds: tuple[float, float] = (0.1, 1.1)
    std_abs_bounds: tuple[float, float] = (0.4, 1.1)
    accel_bounds: tuple[float, float] = (-7.0, 7.0)
    target_mean_abs: float = 0.61
    target_median_abs: float = 0.34
    target_std_abs: float = 0.79
    delta_margin: float = 0.1
    objective_threshold: float = 0.15

    def __post_init__(self) -> None:
        for lo, hi in (self.mean_abs_bounds, self.std_abs_bounds, self.accel_bounds):
            if not lo < hi:
                raise ValueError("bounds must be ordered")
        if self.delta_margin <= 0 or self.objective_threshold <= 0:
            raise ValueError("delta margin and objective threshold must be positive")


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the step optimizer and its initial guess."""

    speed_sigma: float = 2.0
    speed_correlation: float = 0.995
    ramp_accel: float = 2.0
    proximal_weight: float = 1e-3
    base_iterations: int = 100
    max_retries: int = 5


@dataclass(frozen=True, eq=False)
class StepProfile:
    accel: np.ndarray
    speeds: np.ndarray
    v0: float
    objective: float = 0.0
    mean_abs_range: tuple[float, float] = (0.0, math.inf)

    @property
    def n(self) -> int:
        return len(self.accel)

    @property
    def final_speed(self) -> float:
        return float(self.speeds[-1])


@dataclass(frozen=True)
class Fix:
    t: float
    point: GeoPoint
    speed: float | None = None
    accel: float | None = None


def speeds_from(v0: float, accel: np.ndarray) -> np.ndarray:
    """Sequential ``v_j = v_{j-1} + a_j``; numpy's cumsum is a left fold."""
    return np.cumsum(np.concatenate(([v0], accel)))[1:]


def draw_mean_abs_target(stats: DrivingStats, rng: np.random.Generator) -> tuple[float, float]:
    """Per-route range ``[U(lo, hi - delta), hi]`` for the mean of ``|a|``."""
    lo, hi = stats.mean_abs_bounds
    if stats.delta_margin >= hi - lo:
        raise ValueError("delta margin leaves no room for the mean |a| draw")
    return float(rng.uniform(lo, hi - stats.delta_margin)), hi


def initial_guess(n: int, target: float, v0: float, stats: DrivingStats, opts: SolverOptions,
                  rng: np.random.Generator, noise_scale: float = 1.0,
                  tail_dof: float = 3.0) -> np.ndarray:
    """Accelerations consistent with a speed trace drawn around the step mean.

    Speeds are ``target`` plus a slowly varying AR(1) deviation with
    stationary std ``opts.speed_sigma``, ramped in from ``v0`` and back to
    it, so the guess already has zero mean acceleration.
    """
    rho = opts.speed_correlation
    sig = opts.speed_sigma * noise_scale
    # heavy-tailed innovations: mostly gentle changes with occasional firm
    # ones, which keeps std|a| above mean|a| as in real driving
    shocks = rng.standard_t(tail_dof, n) * sig / math.sqrt(tail_dof / (tail_dof - 2.0))
    noise = np.empty(n)
    x = shocks[0]
    inno = math.sqrt(1.0 - rho * rho)
    for j in range(n):
        x = rho * x + inno * shocks[j] if j else x
        noise[j] = x
    j = np.arange(1, n + 1)
    k = max(1.0, abs(target - v0) / opts.ramp_accel)
    env = np.clip(np.minimum(1.0, np.minimum(j / k, (n - j) / k)), 0.0, 1.0)
    cruise = v0 + (target - v0 - np.mean(env * noise)) / max(env.mean(), 1e-9)
    sp = np.maximum(v0 + env * (cruise - v0) + env * noise, 0.0)
    sp[-1] = v0
    a = np.clip(np.diff(np.concatenate(([v0], sp))), *stats.accel_bounds)
    return a - a.mean()


def _abs_moments(a: np.ndarray) -> tuple[np.ndarray, float, float, np.ndarray]:
    ab = np.abs(a)
    return ab, float(ab.mean()), float(ab.std()), np.sign(a)


def _solve_once(n: int, target: float, v0: float, end_at_rest: bool, lo: float, hi: float,
                stats: DrivingStats, opts: SolverOptions, a0: np.ndarray, iters: int) -> np.ndarray:
    slo, shi = stats.std_abs_bounds
    mg = SOLVER_MARGIN
    lo_i, hi_i, slo_i, shi_i = lo + mg, hi - mg, slo + mg, shi - mg
    w = (n - np.arange(n)) / n          # mean(v) = v0 + w @ a
    lower = np.tril(np.ones((n, n)))    # v = v0 + lower @ a
    lam = opts.proximal_weight

    def objective(a):
        r = v0 + w @ a - target
        d = a - a0
        return r * r + lam * (d @ d) / n, 2.0 * r * w + 2.0 * lam * d / n

    def ineq(a):
        ab, m, s, sg = _abs_moments(a)
        dm = sg / n
        ds = (ab - m) * sg / (n * max(s, 1e-12))
        vals = np.array([
            (hi_i - m) * (m - lo_i),
            (shi_i - s) * (s - slo_i),
            s - m - mg,
        ])
        jac = np.vstack([
            ((hi_i - m) - (m - lo_i)) * dm,
            ((shi_i - s) - (s - slo_i)) * ds,
            ds - dm,
        ])
        return vals, jac

    eq_rows = [np.ones(n) / n]
    eq_rhs = [0.0]
    if end_at_rest:
        # v_N = v0 + sum(a) = 0
        eq_rows.append(np.ones(n))
        eq_rhs.append(-v0)
    eq_a = np.vstack(eq_rows)
    eq_b = np.array(eq_rhs)
    cons = [
        {"type": "eq", "fun": lambda a: eq_a @ a - eq_b, "jac": lambda a: eq_a},
        {"type": "ineq", "fun": lambda a: ineq(a)[0], "jac": lambda a: ineq(a)[1]},
        {"type": "ineq", "fun": lambda a: v0 + lower @ a, "jac": lambda a: lower},
    ]
    x = a0
    # SLSQP sometimes stalls on the kinks of |a|; restarting from where it
    # stopped usually gets it moving again
    for _ in range(WARM_RESTARTS):
        with warnings.catch_warnings():
            # SLSQP clips its own line-search overshoot; the notice is noise
            warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
            res = minimize(objective, x, jac=True, method="SLSQP", bounds=[stats.accel_bounds] * n,
                           constraints=cons, options={"maxiter": iters, "ftol": 1e-10})
        x = np.asarray(res.x, float)
        feasible = min(ineq(x)[0].min(), (v0 + lower @ x).min()) >= 0 and np.abs(eq_a @ x - eq_b).max() < 1e-9
        if res.status == 0 and feasible:
            break
    return x


def _finalize(a: np.ndarray, v0: float, stats: DrivingStats) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-mean correction; the last entry returns the speed to ``v0``."""
    a = np.clip(a - a.mean(), *stats.accel_bounds)
    v = speeds_from(v0, a[:-1])
    prev = v[-1] if len(v) else v0
    a[-1] = v0 - prev
    return a, speeds_from(v0, a)


def audit_profile(profile: StepProfile, step: RouteStep, mean_abs_range: tuple[float, float],
                  stats: DrivingStats, is_first: bool = False, is_last: bool = False) -> list[str]:
    """Constraint check independent of the solver. Returns violated names."""
    a, v = np.asarray(profile.accel, float), np.asarray(profile.speeds, float)
    out = []
    n = int(step.t_step)
    if len(a) != n or len(v) != n:
        return [f"length {len(a)} != int(t_step) {n}"]
    if abs(a.mean()) > EQ_TOL:
        out.append("mean(a) = 0")
    amin, amax = stats.accel_bounds
    if a.min() < amin or a.max() > amax:
        out.append("a bounds")
    ab = np.abs(a)
    m, s = ab.mean(), ab.std()
    lo, hi = mean_abs_range
    if (hi - m) * (m - lo) < -INEQ_TOL or not (lo - INEQ_TOL <= m <= hi + INEQ_TOL):
        out.append("mean|a| range")
    slo, shi = stats.std_abs_bounds
    if (shi - s) * (s - slo) < -INEQ_TOL or not (slo - INEQ_TOL <= s <= shi + INEQ_TOL):
        out.append("std|a| range")
    if s - m < -INEQ_TOL:
        out.append("std|a| >= mean|a|")
    if v.min() < -INEQ_TOL:
        out.append("v >= 0")
    recur = np.concatenate(([profile.v0], v[:-1])) + a
    if np.any(recur != v):
        out.append("v_j = v_{j-1} + a_j")
    if not abs(v.mean() - step.d_step / step.t_step) < stats.objective_threshold:
        out.append("|mean(v) - d/t| < threshold")
    if is_first and profile.v0 != 0.0:
        out.append("v0 = 0 on first step")
    if is_last and abs(v[-1]) > EQ_TOL:
        out.append("v_N = 0 on last step")
    return out


def synthesize_step_profile(step: RouteStep, v0: float, is_first: bool, is_last: bool,
                            mean_abs_range: tuple[float, float], stats: DrivingStats | None = None,
                            rng_seed: int | np.random.SeedSequence = 0,
                            opts: SolverOptions | None = None) -> StepProfile:
    """Optimize one step's acceleration vector.

    Minimizes ``|mean(v) - d_step / t_step|`` subject to zero mean
    acceleration, the ``|a|`` mean/std ranges, ``std|a| >= mean|a|``,
    per-sample bounds, nonnegative speeds and the rest conditions of the
    route ends. Retries with a fresh guess and a doubled iteration budget
    until the objective is under the threshold and the audit passes.
    """
    stats = stats or DrivingStats()
    opts = opts or SolverOptions()
    n = int(step.t_step)
    if n < 2:
        raise ValueError(f"step too short for a profile: t_step={step.t_step}")
    if v0 < 0:
        raise ValueError("entry speed must be nonnegative")
    if is_first:
        v0 = 0.0
    lo, hi = mean_abs_range
    target = step.d_step / step.t_step
    rng = np.random.default_rng(rng_seed)
    best: tuple[float, StepProfile | None] = (math.inf, None)
    for attempt in range(opts.max_retries):
        # later attempts start from livelier, heavier-tailed guesses
        a0 = initial_guess(n, target, v0, stats, opts, rng, 1.25 ** attempt,
                           max(2.2, GUESS_TAIL_DOF - 0.25 * attempt))
        iters = opts.base_iterations * 2 ** attempt
        raw = _solve_once(n, target, v0, is_last, lo, hi, stats, opts, a0, iters)
        a, v = _finalize(raw, v0, stats)
        resid = abs(float(v.mean()) - target)
        prof = StepProfile(a, v, v0, resid, (lo, hi))
        a.flags.writeable = False
        v.flags.writeable = False
        problems = audit_profile(prof, step, (lo, hi), stats, is_first, is_last)
        if not problems:
            return prof
        log.debug("step attempt %d rejected: %s (residual %.3g)", attempt, problems, resid)
        if resid < best[0]:
            best = (resid, prof)
    tpl = feasible_template(n, target, v0, lo, hi, stats)
    if tpl is not None:
        a, v = _finalize(tpl, v0, stats)
        a.flags.writeable = False
        v.flags.writeable = False
        prof = StepProfile(a, v, v0, abs(float(v.mean()) - target), (lo, hi))
        if not audit_profile(prof, step, (lo, hi), stats, is_first, is_last):
            log.info("optimizer gave up on a %d s step; using the ramp-and-pulse template", n)
            return prof
    raise StepSynthesisError(f"no acceptable profile for step d={step.d_step:.1f} m t={step.t_step:.1f} s",
                             best[0])


def _template(k1: int, e: float, g: float, pairs: int, h: float, cruise_len: int) -> np.ndarray:
    cruise = np.zeros(cruise_len)
    for i in range(pairs):
        pos = (i * cruise_len) // pairs
        cruise[pos], cruise[pos + 1] = h, -h
    return np.concatenate((np.full(k1, g), [e], cruise, [-e], np.full(k1, -g)))


TEMPLATE_FRACS = (0.25, 0.5, 0.1, 0.75, 0.02, 0.9)


def feasible_template(n: int, target: float, v0: float, lo: float, hi: float,
                      stats: DrivingStats) -> np.ndarray | None:
    """Ramp-and-pulse profile that meets the constraints by construction.

    Ramps up at rate ``g`` for ``k1`` seconds plus one fractional second
    ``e``, cruises with ``pairs`` short ``(+h, -h)`` pulses, and ramps back
    down symmetrically, so the accelerations sum to zero and speeds never
    dip below ``v0``. For fixed ``(g, k1, pairs)`` both the mean speed and
    mean ``|a|`` are linear in ``(e, h)``, so each candidate is a 2x2
    solve; the std conditions are then checked directly. Returns ``None``
    when the search finds nothing.
    """
    slo, shi = stats.std_abs_bounds
    amax = stats.accel_bounds[1]
    for frac in TEMPLATE_FRACS:
        m_t = lo + frac * (hi - lo)
        for g in np.linspace(0.3, amax, 28):
            disc = n * n - 4.0 * max(target - v0, 0.0) * n / g
            if disc < 0:
                continue
            root = int((n - math.sqrt(disc)) / 2.0)
            for k1 in range(max(0, root - 2), root + 2):
                cruise_len = n - 2 * k1 - 2
                if cruise_len < 2:
                    continue
                pair_opts = sorted({int(x) for x in np.linspace(1, cruise_len // 2, 12)})
                for pairs in pair_opts:
                    base = float(speeds_from(v0, _template(k1, 0.0, g, pairs, 0.0, cruise_len)).mean())
                    ce = float(speeds_from(v0, _template(k1, 1.0, g, pairs, 0.0, cruise_len)).mean()) - base
                    ch = float(speeds_from(v0, _template(k1, 0.0, g, pairs, 1.0, cruise_len)).mean()) - base
                    # mean speed = base + ce*e + ch*h ; n*mean|a| = 2*k1*g + 2*e + 2*pairs*h
                    mat = np.array([[ce, ch], [2.0, 2.0 * pairs]])
                    rhs = np.array([target - base, n * m_t - 2.0 * k1 * g])
                    if abs(np.linalg.det(mat)) < 1e-12:
                        continue
                    e, h = np.linalg.solve(mat, rhs)
                    if not (0.0 <= e <= amax and 0.0 <= h <= amax):
                        continue
                    a = _template(k1, float(e), g, pairs, float(h), cruise_len)
                    ab = np.abs(a)
                    m, sd = ab.mean(), ab.std()
                    if lo + INEQ_TOL < m < hi - INEQ_TOL and max(slo, m) + INEQ_TOL < sd < shi - INEQ_TOL:
                        return a
    return None


def is_feasible_step(step: RouteStep) -> bool:
    n = int(step.t_step)
    return n >= MIN_STEP_S and step.d_step / step.t_step <= FEASIBLE_RATIO * n


def coalesce_steps(steps: Sequence[RouteStep]) -> list[RouteStep]:
    """Merge consecutive steps until each leaves room for the rest-to-rest ramps.

    Every step profile starts and ends at the same speed (zero mean
    acceleration), so a route that starts at rest stops at every step
    boundary. Short, fast steps cannot satisfy the ``|a|`` bounds and are
    folded into their neighbours. If a whole leg is still too short its
    time is stretched to the smallest feasible duration.
    """
    out: list[RouteStep] = []
    group: list[RouteStep] = []
    for st in steps:
        group.append(st)
        merged = _merge(group)
        if is_feasible_step(merged):
            out.append(merged)
            group = []
    if group:
        tail = group if not out else [out.pop(), *group]
        merged = _merge(tail)
        if not is_feasible_step(merged):
            merged = _stretch(merged)
        out.append(merged)
    return out


def _merge(group: Sequence[RouteStep]) -> RouteStep:
    if len(group) == 1:
        return group[0]
    return RouteStep(concat_polylines(s.geometry for s in group),
                     sum(s.d_step for s in group), sum(s.t_step for s in group))


def _stretch(step: RouteStep) -> RouteStep:
    t = max(step.t_step, float(MIN_STEP_S))
    while not (int(t) >= MIN_STEP_S and step.d_step / t <= FEASIBLE_RATIO * int(t)):
        t = float(math.floor(t) + 1)
    log.info("stretching %.1f m step from %.1f s to %.1f s", step.d_step, step.t_step, t)
    return RouteStep(step.geometry, step.d_step, t)


def assemble_drive_segment(steps: Sequence[RouteStep], profiles: Sequence[StepProfile],
                           start_time: float) -> list[Fix]:
    """One fix per second along the steps' polylines.

    The first fix sits at the start of the first polyline at ``start_time``.
    Positions come from the integrated speeds, rescaled per step so the
    step's integrated distance lands exactly on its polyline's end.
    """
    if len(steps) != len(profiles) or not steps:
        raise ValueError("profiles must align one-to-one with a non-empty list of steps")
    for k in range(1, len(profiles)):
        if profiles[k].v0 != profiles[k - 1].final_speed:
            raise ValueError(f"speed discontinuity entering step {k}")
    fixes = [Fix(start_time, steps[0].geometry.points[0], float(profiles[0].v0), 0.0)]
    t = start_time
    for st, prof in zip(steps, profiles):
        geom = st.geometry
        total = geom.length_m
        dist = np.cumsum(prof.speeds)
        span = dist[-1]
        scale = total / span if span > 0 else 0.0
        n = len(prof.accel)
        for j in range(n):
            s = total if j == n - 1 else min(total, max(0.0, float(dist[j]) * scale))
            fixes.append(Fix(t + j + 1, interpolate_along(geom, s), float(prof.speeds[j]), float(prof.accel[j])))
        t += n
    return fixes


def walk_duration(distance_m: float, walk_speed: float = WALK_SPEED_MPS) -> int:
    # sub-microsecond slack so exact multiples are not rounded up
    return max(0, math.ceil(distance_m / walk_speed - 1e-6))


def synth_walk(start: GeoPoint, end: GeoPoint, start_time: float,
               walk_speed: float = WALK_SPEED_MPS) -> list[Fix]:
    """Straight-line walk, one fix per second, the last one at ``end``."""
    if walk_speed <= 0:
        raise ValueError("walk speed must be positive")
    dist = haversine_distance(start, end)
    n = walk_duration(dist, walk_speed)
    if n == 0:
        return [Fix(start_time, start, 0.0, 0.0)]
    speed = dist / n
    return [Fix(start_time + k, lerp(start, end, k / n), speed, 0.0) for k in range(1, n + 1)]


def add_gps_noise(fixes: Sequence[Fix], sigma_m: float, rng_seed: int | np.random.SeedSequence = 0) -> list[Fix]:
    """Independent zero-mean gaussian north/east displacement per fix."""
    if sigma_m < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma_m == 0 or not fixes:
        return list(fixes)
    rng = np.random.default_rng(rng_seed)
    d = rng.normal(0.0, sigma_m, (len(fixes), 2))
    return [Fix(f.t, offset_point(f.point, float(dn), float(de)), f.speed, f.accel)
            for f, (dn, de) in zip(fixes, d)]
