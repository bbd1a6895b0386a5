"""Day routes through the identity machine and randomized LP schedules.

A schedule assigns each visit of the day route an arrival and a departure
time (seconds of day). The feasible schedules form a polytope; corners are
found with the simplex solver under random objectives and mixed with random
convex weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DeadStateError, InfeasibleError, RouteSamplingError, ScheduleError
from .geo import GeoPoint, haversine_distance
from .identity import DAY_END_S, Identity, StateSpec
from .kinematics import WALK_SPEED_MPS, walk_duration
from .lp import LinearProgram, solve_lp
from .osm import RoadGraph
from .routing import fastest_path, nearest_vertex, split_waypoints
from .traffic import TrafficModel, TrafficProvider, TrafficQuery

log = logging.getLogger(__name__)

MAX_ROUTE_LEN = 16
ROUTE_ATTEMPTS = 8
N_CORNERS = 5
# arrival strictly after the window opens
STRICT_GAP_S = 1.0
TRANSIT_TOL = 1e-6


@dataclass(frozen=True)
class DayRoute:
    states: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.states)

    @property
    def legs(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.states[1:]))


@dataclass(frozen=True)
class DaySchedule:
    route: DayRoute
    times: tuple[tuple[float, float], ...]
    transit_times: tuple[float, ...]

    @property
    def arrivals(self) -> tuple[float, ...]:
        return tuple(a for a, _ in self.times)

    @property
    def departures(self) -> tuple[float, ...]:
        return tuple(d for _, d in self.times)

    def to_dict(self, identity: Identity | None = None) -> dict[str, Any]:
        visits = []
        for k, (sid, (ta, td)) in enumerate(zip(self.route.states, self.times)):
            v = {"state": sid, "arrival_s": ta, "departure_s": td}
            if identity is not None:
                v["label"] = identity.states[sid].label
            if k < len(self.transit_times):
                v["transit_s"] = self.transit_times[k]
            visits.append(v)
        return {"visits": visits}


# --- route sampling -------------------------------------------------------------

def sample_next_state(identity: Identity, current: int, draw: float) -> int:
    """Successor ``j`` with ``cum[j-1] < draw <= cum[j]`` over the row in id order."""
    row = identity.matrix[current]
    nz = np.flatnonzero(row > 0)
    if nz.size == 0:
        raise DeadStateError(f"state {identity.states[current].label!r} has no outgoing transitions")
    cum = np.cumsum(row)
    j = int(np.searchsorted(cum, draw, side="left"))
    if j >= len(row):
        # draw above a total that rounded just under 1
        return int(nz[-1])
    if row[j] <= 0:
        # only reachable for draw <= 0: take the first real successor
        return int(nz[nz >= j][0]) if np.any(nz >= j) else int(nz[-1])
    return j


def sample_day_route(identity: Identity, rng_seed: int | np.random.SeedSequence,
                     max_route_len: int = MAX_ROUTE_LEN, attempts: int = ROUTE_ATTEMPTS) -> DayRoute:
    """Walk the machine from the initial state until it returns there."""
    rng = np.random.default_rng(rng_seed)
    start = 0
    for _ in range(attempts):
        chain = [start]
        cur = start
        while len(chain) < max_route_len:
            cur = sample_next_state(identity, cur, float(rng.random()))
            chain.append(cur)
            if cur == start:
                break
        if chain[-1] == start and len(chain) > 1 and 1 in chain:
            return DayRoute(tuple(chain))
    raise RouteSamplingError(f"no closed route within {max_route_len} states after {attempts} tries")


# --- transit times ----------------------------------------------------------------

def leg_query(graph: RoadGraph, a: GeoPoint, b: GeoPoint, departure: float,
              model: TrafficModel) -> tuple[TrafficQuery | None, int, int]:
    """Traffic query between the graph vertices nearest to ``a`` and ``b``.

    Returns ``None`` as the query when both snap to the same vertex.
    """
    va, vb = nearest_vertex(graph, a), nearest_vertex(graph, b)
    if va == vb:
        return None, va, vb
    path = fastest_path(graph, va, vb)
    return TrafficQuery(tuple(split_waypoints(path, graph)), departure, model), va, vb


def walk_time(a: GeoPoint, b: GeoPoint, walk_speed: float = WALK_SPEED_MPS) -> float:
    return float(walk_duration(haversine_distance(a, b), walk_speed))


def transit_time_pessimistic(provider: TrafficProvider, src: StateSpec, dst: StateSpec, graph: RoadGraph,
                             day_start: float = 0.0, walk_speed: float = WALK_SPEED_MPS) -> float:
    """Door-to-door seconds from ``src`` to ``dst``.

    The drive is queried under the pessimistic model, departing at the
    middle of ``src``'s arrival window; the walks to and from the nearest
    graph vertices are added on.
    """
    if src.location == dst.location:
        return 0.0
    lo, hi = src.arrival_window
    q, va, vb = leg_query(graph, src.location, dst.location, day_start + (lo + hi) / 2.0,
                          TrafficModel.PESSIMISTIC)
    walks = walk_time(src.location, graph.vertices[va], walk_speed) + walk_time(graph.vertices[vb], dst.location,
                                                                                 walk_speed)
    if q is None:
        return walks
    return walks + sum(s.t_step for s in provider.get_route(q))


# --- the LP -------------------------------------------------------------------------

def build_schedule_lp(route: DayRoute, identity: Identity, transit_times: Sequence[float],
                      coeffs: Sequence[float] | None = None) -> LinearProgram:
    """Variables ``[ta_0, td_0, ta_1, td_1, ...]``, one pair per visit.

    ``coeffs`` holds one weight per visit, applied to both its arrival and
    its departure.
    """
    k = len(route)
    if len(transit_times) != k - 1:
        raise ValueError("need one transit time per leg")
    n = 2 * k
    c = np.zeros(n)
    if coeffs is not None:
        if len(coeffs) != k:
            raise ValueError("need one objective coefficient per visit")
        c[0::2] = coeffs
        c[1::2] = coeffs
    ub_rows, ub_rhs, ub_names = [], [], []
    eq_rows, eq_rhs, eq_names = [], [], []
    var_names = []
    for j, sid in enumerate(route.states):
        st = identity.states[sid]
        tag = f"{st.label}#{j}"
        var_names += [f"arrival({tag})", f"departure({tag})"]
        lo, hi = st.arrival_window
        r = np.zeros(n)
        r[2 * j] = -1.0
        ub_rows.append(r)
        ub_rhs.append(-(lo + STRICT_GAP_S))
        ub_names.append(f"window_open({tag})")
        r = np.zeros(n)
        r[2 * j] = 1.0
        ub_rows.append(r)
        ub_rhs.append(hi)
        ub_names.append(f"window_close({tag})")
        r = np.zeros(n)
        r[2 * j], r[2 * j + 1] = 1.0, -1.0
        ub_rows.append(r)
        ub_rhs.append(-st.t_min_s)
        ub_names.append(f"dwell({tag})")
        if j + 1 < k:
            r = np.zeros(n)
            r[2 * j + 2], r[2 * j + 1] = 1.0, -1.0
            eq_rows.append(r)
            eq_rhs.append(transit_times[j])
            eq_names.append(f"transit({tag}->{identity.states[route.states[j + 1]].label}#{j + 1})")
    return LinearProgram(c, np.array(ub_rows), np.array(ub_rhs), np.array(eq_rows).reshape(-1, n),
                         np.array(eq_rhs), np.zeros(n), np.full(n, DAY_END_S),
                         tuple(ub_names), tuple(eq_names), tuple(var_names))


def audit_schedule(schedule: DaySchedule, identity: Identity, tol: float = TRANSIT_TOL) -> list[str]:
    """Names of violated schedule constraints (empty when the schedule is valid)."""
    out = []
    t = schedule.times
    if len(t) != len(schedule.route) or len(schedule.transit_times) != len(t) - 1:
        return ["shape"]
    for j, (sid, (ta, td)) in enumerate(zip(schedule.route.states, t)):
        st = identity.states[sid]
        tag = f"{st.label}#{j}"
        lo, hi = st.arrival_window
        if not (0.0 - tol <= ta <= DAY_END_S + tol and 0.0 - tol <= td <= DAY_END_S + tol):
            out.append(f"day_bounds({tag})")
        if ta < lo + STRICT_GAP_S - tol or ta > hi + tol:
            out.append(f"window({tag})")
        if td - ta < st.t_min_s - tol:
            out.append(f"dwell({tag})")
        if j + 1 < len(t) and abs(t[j + 1][0] - td - schedule.transit_times[j]) > tol:
            out.append(f"transit({tag})")
    return out


def _schedule_from_x(route: DayRoute, x: np.ndarray, transits: Sequence[float]) -> DaySchedule:
    times = tuple((float(x[2 * j]), float(x[2 * j + 1])) for j in range(len(route)))
    return DaySchedule(route, times, tuple(float(v) for v in transits))


def sample_schedule(route: DayRoute, identity: Identity, provider: TrafficProvider, graph: RoadGraph,
                    rng_seed: int | np.random.SeedSequence, n_corners: int = N_CORNERS,
                    day_start: float = 0.0, transit_cache: dict | None = None,
                    transit_fn: Callable[[StateSpec, StateSpec], float] | None = None) -> DaySchedule:
    """Random convex combination of ``n_corners`` LP corners."""
    if n_corners < 1:
        raise ValueError("n_corners must be at least 1")
    cache = transit_cache if transit_cache is not None else {}
    transits = []
    for a, b in route.legs:
        if (a, b) not in cache:
            sa, sb = identity.states[a], identity.states[b]
            cache[(a, b)] = (transit_fn(sa, sb) if transit_fn is not None
                             else transit_time_pessimistic(provider, sa, sb, graph, day_start))
        transits.append(cache[(a, b)])
    return mix_corners(build_schedule_lp(route, identity, transits), route, identity, transits,
                       np.random.default_rng(rng_seed), n_corners)


def mix_corners(lp: LinearProgram, route: DayRoute, identity: Identity, transits: Sequence[float],
                rng: np.random.Generator, n_corners: int, weights: Sequence[float] | None = None) -> DaySchedule:
    corners = []
    for _ in range(n_corners):
        coeffs = rng.uniform(-1.0, 1.0, len(route))
        corners.append(solve_lp(lp.with_objective(np.repeat(coeffs, 2))).x)
    if weights is None:
        w = rng.exponential(1.0, n_corners)
        w = w / w.sum()
    else:
        w = np.asarray(weights, float)
        if len(w) != n_corners or np.any(w <= 0) or not math.isclose(w.sum(), 1.0):
            raise ValueError("weights must be positive, one per corner, and sum to 1")
    x = corners[0] if n_corners == 1 else w @ np.array(corners)
    sched = _schedule_from_x(route, x, transits)
    bad = audit_schedule(sched, identity)
    if bad:
        raise ScheduleError(f"convex combination failed the audit: {bad}")
    return sched


def plan_day(identity: Identity, provider: TrafficProvider, graph: RoadGraph,
             rng_seed: int | np.random.SeedSequence, n_corners: int = N_CORNERS,
             max_route_len: int = MAX_ROUTE_LEN, day_start: float = 0.0,
             attempts: int = ROUTE_ATTEMPTS) -> DaySchedule:
    """Route plus schedule; resamples the route when its LP is infeasible."""
    ss = np.random.SeedSequence(rng_seed) if not isinstance(rng_seed, np.random.SeedSequence) else rng_seed
    cache: dict = {}
    last: InfeasibleError | None = None
    for k, child in enumerate(ss.spawn(attempts)):
        route_seed, lp_seed = child.spawn(2)
        route = sample_day_route(identity, route_seed, max_route_len)
        try:
            return sample_schedule(route, identity, provider, graph, lp_seed, n_corners, day_start, cache)
        except InfeasibleError as e:
            log.info("route %s infeasible (%s), resampling", route.states, ", ".join(e.violated))
            last = e
    assert last is not None
    raise InfeasibleError(f"no feasible schedule after {attempts} routes", last.violated)
