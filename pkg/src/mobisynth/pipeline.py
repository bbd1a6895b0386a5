"""A full synthetic day: route, schedule, legs, kinematics, one trajectory."""

from __future__ import annotations

import calendar
import datetime as dt
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DaySynthesisError, StepSynthesisError
from .geo import GeoPoint
from .identity import DAY_END_S, Identity
from .kinematics import (WALK_SPEED_MPS, DrivingStats, Fix, SolverOptions, StepProfile, add_gps_noise,
                         assemble_drive_segment, coalesce_steps, draw_mean_abs_target, synth_walk,
                         synthesize_step_profile)
from .osm import RoadGraph
from .scheduler import MAX_ROUTE_LEN, N_CORNERS, DaySchedule, leg_query, plan_day
from .traffic import RouteStep, TrafficModel, TrafficProvider

log = logging.getLogger(__name__)

IDLE_PERIOD_S = 60
GPS_SIGMA_M = 3.0


class SegmentKind(str, enum.Enum):
    IDLE = "idle"
    WALK = "walk"
    DRIVE = "drive"


@dataclass(frozen=True)
class Segment:
    """Fixes ``[start, end)`` of the trajectory."""

    kind: SegmentKind
    start: int
    end: int
    label: str = ""


@dataclass(frozen=True, eq=False)
class LegRecord:
    from_visit: int
    to_visit: int
    scheduled_departure: float
    scheduled_arrival: float
    departure: float
    arrival: float
    steps: tuple[RouteStep, ...] = ()
    profiles: tuple[StepProfile, ...] = ()
    mean_abs_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class SynthConfig:
    stats: DrivingStats = field(default_factory=DrivingStats)
    solver: SolverOptions = field(default_factory=SolverOptions)
    n_corners: int = N_CORNERS
    max_route_len: int = MAX_ROUTE_LEN
    gps_sigma_m: float = GPS_SIGMA_M
    idle_period_s: int = IDLE_PERIOD_S
    walk_speed_mps: float = WALK_SPEED_MPS


@dataclass(frozen=True, eq=False)
class Trajectory:
    fixes: tuple[Fix, ...]
    segments: tuple[Segment, ...]
    day: dt.date | None = None
    identity_ref: str = ""
    schedule: DaySchedule | None = None
    legs: tuple[LegRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.fixes)

    @property
    def duration_s(self) -> float:
        return self.fixes[-1].t - self.fixes[0].t if self.fixes else 0.0

    def segment_fixes(self, seg: Segment) -> tuple[Fix, ...]:
        return self.fixes[seg.start:seg.end]

    def drive_segments(self) -> list[tuple[Fix, ...]]:
        return [self.segment_fixes(s) for s in self.segments if s.kind is SegmentKind.DRIVE]


def day_start_unix(day: dt.date) -> int:
    return calendar.timegm(day.timetuple()[:3] + (0, 0, 0))


class _Builder:
    """Accumulates fixes and segment spans in time order."""

    def __init__(self) -> None:
        self.fixes: list[Fix] = []
        self.segments: list[Segment] = []

    @property
    def last_t(self) -> float:
        return self.fixes[-1].t if self.fixes else -math.inf

    def add(self, kind: SegmentKind, fixes: list[Fix], label: str = "") -> None:
        if not fixes:
            return
        if fixes[0].t <= self.last_t:
            raise AssertionError("fixes out of order")
        start = len(self.fixes)
        self.fixes.extend(fixes)
        if self.segments and self.segments[-1].kind is kind and self.segments[-1].label == label:
            prev = self.segments.pop()
            start = prev.start
        self.segments.append(Segment(kind, start, len(self.fixes), label))

    def idle(self, where: GeoPoint, t0: float, t1: float, period: int, label: str) -> None:
        """Stationary fixes from ``t0`` every ``period`` seconds, plus one at ``t1``."""
        ts = [t for t in np.arange(t0, t1, period) if t > self.last_t]
        if t1 > self.last_t and (not ts or ts[-1] != t1):
            ts.append(t1)
        self.add(SegmentKind.IDLE, [Fix(float(t), where, 0.0, 0.0) for t in ts], label)


def _drive(steps: list[RouteStep], rng: np.random.Generator, cfg: SynthConfig, start: float,
           leg_name: str) -> tuple[list[Fix], list[RouteStep], list[StepProfile], tuple[float, float]]:
    steps = coalesce_steps(steps)
    rng_range = draw_mean_abs_target(cfg.stats, rng)
    profiles = []
    v0 = 0.0
    for k, st in enumerate(steps):
        seed = int(rng.integers(2**63))
        try:
            prof = synthesize_step_profile(st, v0, k == 0, k == len(steps) - 1, rng_range, cfg.stats, seed,
                                           cfg.solver)
        except StepSynthesisError as e:
            raise DaySynthesisError(f"step {k} of {len(steps)}: {e}", leg_name) from e
        profiles.append(prof)
        v0 = prof.final_speed
    return assemble_drive_segment(steps, profiles, start), steps, profiles, rng_range


def synthesize_day(identity: Identity, day: dt.date, graph: RoadGraph, provider: TrafficProvider,
                   cfg: SynthConfig | None = None, rng_seed: int = 0, identity_ref: str = "") -> Trajectory:
    """Synthesize one day of fixes from midnight to 23:59:59 UTC.

    Legs are driven with best-guess traffic. When a leg is quicker than the
    pessimistic time the schedule assumed, departure is delayed so arrival
    still lands on the scheduled time; slower legs arrive late and push
    later departures back while keeping each state's minimum dwell.
    """
    cfg = cfg or SynthConfig()
    base = day_start_unix(day)
    day_end = base + DAY_END_S
    plan_ss, legs_ss, noise_ss = np.random.SeedSequence(rng_seed).spawn(3)
    sched = plan_day(identity, provider, graph, plan_ss, cfg.n_corners, cfg.max_route_len, float(base))
    visits = [identity.states[s] for s in sched.route.states]
    leg_seeds = legs_ss.spawn(max(1, len(visits) - 1))

    b = _Builder()
    legs = []
    here = visits[0]
    arrived = float(base)
    for j in range(len(visits) - 1):
        src, dst = visits[j], visits[j + 1]
        leg_name = f"{j}:{src.label}->{dst.label}"
        rng = np.random.default_rng(leg_seeds[j])
        sched_dep = base + sched.times[j][1]
        sched_arr = base + sched.times[j + 1][0]
        transit = sched.transit_times[j]

        # realized pieces; the drive's timing is only known once built
        walk_a = walk_b = None
        drive_steps: list[RouteStep] = []
        va = vb = None
        if src.location != dst.location:
            q, va, vb = leg_query(graph, src.location, dst.location, sched_dep, TrafficModel.BEST_GUESS)
            if q is not None:
                drive_steps = provider.get_route(q)
        earliest = math.ceil(max(arrived + src.t_min_s, sched_dep))

        leg_fixes: list[tuple[SegmentKind, list[Fix]]] = []
        t = 0.0
        profiles: list[StepProfile] = []
        coalesced: list[RouteStep] = []
        rng_range = None
        if va is not None:
            walk_a = synth_walk(src.location, graph.vertices[va], t, cfg.walk_speed_mps)
            if len(walk_a) > 1 or walk_a[0].point != src.location:
                leg_fixes.append((SegmentKind.WALK, walk_a))
                t = walk_a[-1].t
            start_pt = graph.vertices[va]
            if drive_steps:
                drv, coalesced, profiles, rng_range = _drive(drive_steps, rng, cfg, t + 1, leg_name)
                leg_fixes.append((SegmentKind.DRIVE, drv))
                t = drv[-1].t
                start_pt = drv[-1].point
            walk_b = synth_walk(start_pt, dst.location, t, cfg.walk_speed_mps)
            if len(walk_b) > 1 or walk_b[0].point != start_pt:
                leg_fixes.append((SegmentKind.WALK, walk_b))
                t = walk_b[-1].t
        duration = t
        slack = max(0.0, transit - duration)
        depart = max(earliest, math.ceil(sched_dep + slack))
        b.idle(here.location, arrived, depart, cfg.idle_period_s, here.label)
        for kind, fx in leg_fixes:
            b.add(kind, [Fix(f.t + depart, f.point, f.speed, f.accel) for f in fx], leg_name)
        arrived = depart + duration
        legs.append(LegRecord(j, j + 1, sched_dep, sched_arr, float(depart), float(arrived),
                              tuple(coalesced), tuple(profiles), rng_range))
        here = dst
    b.idle(here.location, arrived, max(arrived, day_end), cfg.idle_period_s, here.label)

    fixes = add_gps_noise(b.fixes, cfg.gps_sigma_m, noise_ss)
    return Trajectory(tuple(fixes), tuple(b.segments), day, identity_ref, sched, tuple(legs))
