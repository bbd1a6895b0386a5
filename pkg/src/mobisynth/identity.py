"""Probabilistic finite state machines describing a synthetic user's day."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import IdentityError, TransitionWarning
from .geo import GeoPoint, haversine_distance
from .osm import Poi, PoiKind

DAY_END_S = 86399.0
DEFAULT_WINDOW = (0.0, DAY_END_S)


def hms(h: int, m: int = 0, s: int = 0) -> float:
    return float(h * 3600 + m * 60 + s)


class StateKind(str, enum.Enum):
    SIGNIFICANT = "significant"
    TRANSITIONAL = "transitional"


@dataclass(frozen=True)
class StateSpec:
    """One state of the machine.

    ``origin``/``destination`` are the ids of the significant states a
    transitional state is visited between. For a significant state,
    ``destination`` is the next significant state on the daily cycle.
    """

    id: int
    label: str
    kind: StateKind
    location: GeoPoint
    t_min_s: float = 0.0
    arrival_window: tuple[float, float] = DEFAULT_WINDOW
    frequency_days: float = 1.0
    occurrence_prob: float = 1.0
    origin: int | None = None
    destination: int | None = None
    poi_id: str | None = None

    def __post_init__(self) -> None:
        lo, hi = self.arrival_window
        if not (0.0 <= lo < hi <= DAY_END_S):
            raise ValueError(f"state {self.label!r}: bad arrival window {self.arrival_window}")
        if self.t_min_s < 0:
            raise ValueError(f"state {self.label!r}: negative t_min")
        if not 0.0 <= self.occurrence_prob <= 1.0:
            raise ValueError(f"state {self.label!r}: occurrence probability outside [0, 1]")

    @property
    def significant(self) -> bool:
        return self.kind is StateKind.SIGNIFICANT


@dataclass(frozen=True)
class Identity:
    states: tuple[StateSpec, ...]
    transitions: tuple[tuple[float, ...], ...]
    weekday: bool = True
    seed: int = 0

    @property
    def matrix(self) -> np.ndarray:
        m = np.array(self.transitions, dtype=float)
        m.flags.writeable = False
        return m

    def __len__(self) -> int:
        return len(self.states)

    def by_label(self, label: str) -> StateSpec:
        for s in self.states:
            if s.label == label:
                return s
        raise KeyError(label)


@dataclass(frozen=True)
class StateTemplate:
    """Blueprint for one state; resolved against a POI catalogue.

    ``frequency_bounds`` is ``(l, u)`` in workdays for transitional states.
    Leaving it ``None`` on a gas-station template selects the fuel-range
    formula instead. ``same_place_as`` makes a significant state reuse an
    earlier state's location, which is how the workday is split in two.
    """

    label: str
    poi_kind: PoiKind
    significant: bool = False
    origin: str | None = None
    destination: str | None = None
    arrival_window: tuple[float, float] = DEFAULT_WINDOW
    t_min_s: float = 0.0
    frequency_bounds: tuple[float, float] | None = None
    same_place_as: str | None = None


@dataclass(frozen=True)
class IdentityConfig:
    templates: tuple[StateTemplate, ...]
    workdays_per_year: float = 250.0
    mileage_kmpl: tuple[float, float] = (8.0, 15.0)
    tank_l: tuple[float, float] = (40.0, 70.0)
    n_transitional: int | None = None
    weekday: bool = True

    def __post_init__(self) -> None:
        if self.workdays_per_year <= 0:
            raise ValueError("workdays_per_year must be positive")
        sig = [t for t in self.templates if t.significant]
        if len(sig) < 2:
            raise ValueError("at least two significant states are required")
        for t in self.templates:
            if t.frequency_bounds is not None:
                lo, hi = t.frequency_bounds
                if lo < 1 or hi < lo:
                    raise ValueError(f"{t.label}: frequency bounds must satisfy 1 <= l <= u")
            elif not t.significant and t.poi_kind is not PoiKind.GAS_STATION:
                raise ValueError(f"{t.label}: transitional state needs frequency bounds")


def two_state_config() -> IdentityConfig:
    return IdentityConfig((
        StateTemplate("Home", PoiKind.RESIDENTIAL, significant=True),
        StateTemplate("Work", PoiKind.WORK, significant=True,
                      arrival_window=(hms(8), hms(9)), t_min_s=hms(8)),
    ))


def weekday_config() -> IdentityConfig:
    return IdentityConfig((
        StateTemplate("Home", PoiKind.RESIDENTIAL, significant=True),
        StateTemplate("Work", PoiKind.WORK, significant=True,
                      arrival_window=(hms(8), hms(9, 30)), t_min_s=hms(3, 30)),
        StateTemplate("Work (evening)", PoiKind.WORK, significant=True, same_place_as="Work",
                      arrival_window=(hms(12), hms(14, 30)), t_min_s=hms(3, 30)),
        StateTemplate("School", PoiKind.SCHOOL, origin="Home", destination="Work",
                      arrival_window=(hms(7), hms(8, 30)), t_min_s=300, frequency_bounds=(2, 5)),
        StateTemplate("Gas Station", PoiKind.GAS_STATION, origin="Home", destination="Work",
                      t_min_s=300),
        StateTemplate("Lunch", PoiKind.RESTAURANT, origin="Work", destination="Work (evening)",
                      arrival_window=(hms(11, 30), hms(13, 30)), t_min_s=1800, frequency_bounds=(2, 7)),
        StateTemplate("Dinner", PoiKind.RESTAURANT, origin="Work (evening)", destination="Home",
                      arrival_window=(hms(17, 30), hms(21)), t_min_s=2700, frequency_bounds=(5, 20)),
    ))


def weekend_config() -> IdentityConfig:
    return IdentityConfig((
        StateTemplate("Home", PoiKind.RESIDENTIAL, significant=True),
        StateTemplate("Cinema", PoiKind.CINEMA, significant=True,
                      arrival_window=(hms(13), hms(20)), t_min_s=hms(2)),
        StateTemplate("Dinner", PoiKind.RESTAURANT, origin="Cinema", destination="Home",
                      arrival_window=(hms(15), hms(22)), t_min_s=2700, frequency_bounds=(1, 3)),
    ), weekday=False)


def gas_frequency(mileage_kmpl: float, capacity_l: float, home: GeoPoint, work: GeoPoint) -> int:
    """Workdays of commuting before the tank drops below a quarter.

    ``int(0.75 * m * c / round_trip)`` with the range in meters, clamped to 1.
    """
    if mileage_kmpl <= 0 or capacity_l <= 0:
        raise ValueError("mileage and capacity must be positive")
    round_trip = haversine_distance(home, work) + haversine_distance(work, home)
    if round_trip <= 0:
        raise ValueError("home and work coincide; round trip is zero")
    return max(1, int(0.75 * mileage_kmpl * capacity_l * 1000.0 / round_trip))


def transition_allowed(states: Sequence[StateSpec], i: int, j: int) -> bool:
    """Connectivity rule between two states of a machine."""
    if i == j:
        return False
    qi, qj = states[i], states[j]
    if qi.significant and qj.significant:
        return qi.destination == j
    if qi.significant:
        return qj.origin == i
    if qj.significant:
        return qi.destination == j
    if qi.origin is None or qi.origin != qj.origin:
        return False
    anchor = states[qi.origin].location
    return haversine_distance(anchor, qi.location) < haversine_distance(anchor, qj.location)


def build_transitions(states: Sequence[StateSpec]) -> np.ndarray:
    """Row-stochastic transition matrix from the connectivity rule.

    Allowed pairs get the product of the two occurrence probabilities; the
    significant-to-significant entry takes the residual mass of its row.
    Every row with an outgoing edge is then normalized.
    """
    n = len(states)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if transition_allowed(states, i, j):
                m[i, j] = states[i].occurrence_prob * states[j].occurrence_prob
    for s in states:
        if not s.significant or s.destination is None:
            continue
        mass = sum(m[s.id, j] for j in range(n) if not states[j].significant)
        residual = 1.0 - mass
        if residual < 0.0:
            warnings.warn(f"transitional mass {mass:.3f} out of {s.label!r} exceeds 1; "
                          "residual clamped to 0", TransitionWarning, stacklevel=2)
            residual = 0.0
        m[s.id, s.destination] = residual
    sums = m.sum(axis=1, keepdims=True)
    nz = sums[:, 0] > 0
    m[nz] = m[nz] / sums[nz]
    return m


def _pick_nearest(cands: Sequence[Poi], a: GeoPoint, b: GeoPoint) -> Poi:
    return min(cands, key=lambda p: haversine_distance(p.location, a) + haversine_distance(p.location, b))


def build_identity(pois: Sequence[Poi], cfg: IdentityConfig, rng_seed: int) -> Identity:
    """Resolve a config against a POI catalogue into a state machine.

    Significant states are drawn uniformly from their candidates; each
    transitional state sits at the candidate minimizing the summed distance
    to its origin and destination states. Deterministic in ``rng_seed``.
    """
    rng = np.random.default_rng(rng_seed)
    by_kind: dict[PoiKind, list[Poi]] = {k: [] for k in PoiKind}
    for p in sorted(pois, key=lambda p: p.id):
        by_kind[p.kind].append(p)

    sig_t = [t for t in cfg.templates if t.significant]
    tr_t = [t for t in cfg.templates if not t.significant]
    if cfg.n_transitional is not None and cfg.n_transitional < len(tr_t):
        picked = sorted(rng.choice(len(tr_t), size=cfg.n_transitional, replace=False))
        tr_t = [tr_t[i] for i in picked]

    ids = {t.label: k for k, t in enumerate(sig_t + tr_t)}
    if len(ids) != len(sig_t) + len(tr_t):
        raise IdentityError("state labels must be unique")

    sig_loc: dict[str, Poi] = {}
    for t in sig_t:
        if t.same_place_as is not None:
            if t.same_place_as not in sig_loc:
                raise IdentityError(f"{t.label}: unknown state {t.same_place_as!r}")
            sig_loc[t.label] = sig_loc[t.same_place_as]
            continue
        cands = by_kind[t.poi_kind]
        if not cands:
            raise IdentityError(f"no {t.poi_kind.value} candidates for state {t.label!r}")
        sig_loc[t.label] = cands[int(rng.integers(len(cands)))]

    states: list[StateSpec] = []
    for k, t in enumerate(sig_t):
        nxt = (k + 1) % len(sig_t)
        states.append(StateSpec(k, t.label, StateKind.SIGNIFICANT, sig_loc[t.label].location,
                                t.t_min_s, t.arrival_window, 1.0, 1.0,
                                origin=None, destination=nxt, poi_id=sig_loc[t.label].id))

    home = sig_loc[sig_t[0].label].location
    work = sig_loc[sig_t[1].label].location
    for t in tr_t:
        for end in (t.origin, t.destination):
            if end not in sig_loc:
                raise IdentityError(f"{t.label}: origin/destination {end!r} is not a significant state")
        cands = by_kind[t.poi_kind]
        if not cands:
            raise IdentityError(f"no {t.poi_kind.value} candidates for state {t.label!r}")
        poi = _pick_nearest(cands, sig_loc[t.origin].location, sig_loc[t.destination].location)
        if t.frequency_bounds is None:
            m = rng.uniform(*cfg.mileage_kmpl)
            c = rng.uniform(*cfg.tank_l)
            freq = float(gas_frequency(m, c, home, work))
        else:
            freq = float(rng.uniform(*t.frequency_bounds))
        # (W / f) visits per W workdays
        prob = 1.0 / freq
        states.append(StateSpec(ids[t.label], t.label, StateKind.TRANSITIONAL, poi.location,
                                t.t_min_s, t.arrival_window, freq, prob,
                                origin=ids[t.origin], destination=ids[t.destination], poi_id=poi.id))

    matrix = build_transitions(states)
    return Identity(tuple(states), tuple(tuple(float(x) for x in row) for row in matrix),
                    weekday=cfg.weekday, seed=int(rng_seed))


# --- serialization -----------------------------------------------------------

def identity_to_dict(identity: Identity) -> dict[str, Any]:
    return {
        "weekday": identity.weekday,
        "seed": identity.seed,
        "states": [
            {
                "id": s.id,
                "label": s.label,
                "kind": s.kind.value,
                "lat": s.location.lat,
                "lon": s.location.lon,
                "t_min_s": s.t_min_s,
                "arrival_window": list(s.arrival_window),
                "frequency_days": s.frequency_days,
                "occurrence_prob": s.occurrence_prob,
                "origin": s.origin,
                "destination": s.destination,
                "poi_id": s.poi_id,
            }
            for s in identity.states
        ],
        "transitions": [list(row) for row in identity.transitions],
    }


def identity_from_dict(doc: dict[str, Any]) -> Identity:
    states = tuple(
        StateSpec(d["id"], d["label"], StateKind(d["kind"]), GeoPoint(d["lat"], d["lon"]),
                  d["t_min_s"], tuple(d["arrival_window"]), d["frequency_days"], d["occurrence_prob"],
                  d["origin"], d["destination"], d.get("poi_id"))
        for d in doc["states"]
    )
    rows = tuple(tuple(float(x) for x in row) for row in doc["transitions"])
    if len(rows) != len(states) or any(len(r) != len(states) for r in rows):
        raise ValueError("transition matrix does not match the number of states")
    for r in rows:
        if any(x < 0 or not math.isfinite(x) for x in r):
            raise ValueError("transition probabilities must be finite and nonnegative")
    return Identity(states, rows, bool(doc["weekday"]), int(doc["seed"]))
