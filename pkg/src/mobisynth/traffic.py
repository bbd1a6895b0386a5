"""Traffic-annotated route steps from an offline model or a directions API."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import (NoRouteError, PolylineDecodeError, ProviderError, QuotaError, TransportError,
                     ZeroResultsError)
from .geo import GeoPoint, Polyline
from .osm import RoadGraph
from .routing import fastest_path, nearest_vertex

log = logging.getLogger(__name__)

API_KEY_ENV = "MOBISYNTH_API_KEY"
DIRECTIONS_URL = "https://maps.googleapis.com/maps/api/directions/json"
WEEK_S = 7 * 86400

PESSIMISTIC_FACTOR = 1.2
# (start hour, end hour, multiplier); anything else is free flow
CONGESTION_SCHEDULE = ((7.0, 10.0, 1.5), (16.0, 19.0, 1.4))


class TrafficModel(str, enum.Enum):
    PESSIMISTIC = "pessimistic"
    BEST_GUESS = "best_guess"


@dataclass(frozen=True)
class RouteStep:
    geometry: Polyline
    d_step: float
    t_step: float

    def __post_init__(self) -> None:
        if not self.d_step > 0:
            raise ValueError(f"step distance must be positive, got {self.d_step}")
        if not self.t_step > 0:
            raise ValueError(f"step time must be positive, got {self.t_step}")

    @property
    def mean_speed(self) -> float:
        return self.d_step / self.t_step


@dataclass(frozen=True)
class TrafficQuery:
    waypoints: tuple[GeoPoint, ...]
    departure: float
    model: TrafficModel = TrafficModel.BEST_GUESS

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("a traffic query needs at least two waypoints")
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        object.__setattr__(self, "model", TrafficModel(self.model))

    def canonical(self) -> str:
        doc = {
            "waypoints": [[round(p.lat, 6), round(p.lon, 6)] for p in self.waypoints],
            "departure": int(math.floor(self.departure)),
            "model": self.model.value,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class TrafficProvider(Protocol):
    def get_route(self, q: TrafficQuery) -> list[RouteStep]: ...


def congestion_factor(timestamp: float) -> float:
    hour = (timestamp % 86400.0) / 3600.0
    for start, end, factor in CONGESTION_SCHEDULE:
        if start <= hour < end:
            return factor
    return 1.0


def offline_route(graph: RoadGraph, q: TrafficQuery) -> list[RouteStep]:
    """Deterministic traffic model over the local graph.

    One step per fastest-path run between consecutive waypoints. Times are
    free-flow times scaled by the congestion multiplier at the departure
    clock time, and by a further 1.2 under the pessimistic model.
    """
    factor = congestion_factor(q.departure)
    if q.model is TrafficModel.PESSIMISTIC:
        factor *= PESSIMISTIC_FACTOR
    verts = [nearest_vertex(graph, p) for p in q.waypoints]
    steps = []
    for a, b in zip(verts, verts[1:]):
        if a == b:
            continue
        path = fastest_path(graph, a, b)
        steps.append(RouteStep(path.geometry, path.total_length_m, path.total_time_s * factor))
    if not steps:
        raise NoRouteError("all waypoints snap to the same vertex")
    return steps


class OfflineProvider:
    """Provider backed by :func:`offline_route`."""

    def __init__(self, graph: RoadGraph):
        self.graph = graph

    def get_route(self, q: TrafficQuery) -> list[RouteStep]:
        return offline_route(self.graph, q)


# --- encoded polylines --------------------------------------------------------

def decode_polyline(encoded: str, precision: int = 5) -> list[GeoPoint]:
    """Decode a Google encoded polyline into its point list (empty for "")."""
    return [GeoPoint(lat, lon) for lat, lon in decode_points(encoded, precision)]


def decode_points(encoded: str, precision: int = 5) -> list[tuple[float, float]]:
    scale = 10.0 ** precision
    out: list[tuple[float, float]] = []
    lat = lon = 0
    i = 0
    n = len(encoded)
    while i < n:
        deltas = []
        for _ in range(2):
            shift = result = 0
            while True:
                if i >= n:
                    raise PolylineDecodeError("truncated polyline", i)
                b = ord(encoded[i]) - 63
                if not 0 <= b < 64:
                    raise PolylineDecodeError(f"invalid character {encoded[i]!r}", i)
                i += 1
                result |= (b & 0x1F) << shift
                shift += 5
                if b < 0x20:
                    break
            deltas.append(~(result >> 1) if result & 1 else result >> 1)
        lat += deltas[0]
        lon += deltas[1]
        out.append((lat / scale, lon / scale))
    return out


def _encode_value(v: int) -> str:
    v = ~(v << 1) if v < 0 else v << 1
    chunks = []
    while v >= 0x20:
        chunks.append(chr((0x20 | (v & 0x1F)) + 63))
        v >>= 5
    chunks.append(chr(v + 63))
    return "".join(chunks)


def encode_points(points: Sequence[tuple[float, float]], precision: int = 5) -> str:
    scale = 10 ** precision
    out = []
    plat = plon = 0
    for lat, lon in points:
        ilat, ilon = round(lat * scale), round(lon * scale)
        out.append(_encode_value(ilat - plat))
        out.append(_encode_value(ilon - plon))
        plat, plon = ilat, ilon
    return "".join(out)


def encode_polyline(p: Polyline | Sequence[GeoPoint], precision: int = 5) -> str:
    pts = p.points if isinstance(p, Polyline) else p
    return encode_points([(q.lat, q.lon) for q in pts], precision)


# --- remote client ------------------------------------------------------------

class TokenBucket:
    """Blocking rate limiter; ``clock`` and ``sleep`` are injectable for tests."""

    def __init__(self, rate: float, capacity: float = 1.0,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if rate <= 0 or capacity < 1:
            raise ValueError("rate must be positive and capacity at least 1")
        self.rate = rate
        self.capacity = capacity
        self.clock = clock
        self.sleep = sleep
        self._tokens = capacity
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self.clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                # tolerance: refills can land a rounding error short of 1
                if self._tokens >= 1.0 - 1e-9:
                    self._tokens = max(0.0, self._tokens - 1.0)
                    return
                self.sleep((1.0 - self._tokens) / self.rate)


def _steps_to_doc(steps: Sequence[RouteStep]) -> list[dict]:
    return [{"points": [[p.lat, p.lon] for p in s.geometry.points], "d_step": s.d_step, "t_step": s.t_step}
            for s in steps]


def _steps_from_doc(doc: Sequence[dict]) -> list[RouteStep]:
    return [RouteStep(Polyline(tuple(GeoPoint(a, b) for a, b in d["points"])), d["d_step"], d["t_step"])
            for d in doc]


class DiskCache:
    """One canonical JSON file per query hash."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, q: TrafficQuery) -> Path:
        return self.root / (hashlib.sha256(q.canonical().encode()).hexdigest() + ".json")

    def get(self, q: TrafficQuery) -> list[RouteStep] | None:
        p = self.path_for(q)
        if not p.exists():
            return None
        return _steps_from_doc(json.loads(p.read_text(encoding="utf-8"))["steps"])

    def put(self, q: TrafficQuery, steps: Sequence[RouteStep]) -> None:
        doc = {"query": json.loads(q.canonical()), "steps": _steps_to_doc(steps)}
        tmp = self.path_for(q).with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")
        tmp.replace(self.path_for(q))


def shift_to_future(departure: float, now: float) -> float:
    """Move a departure forward by whole weeks until it is after ``now``.

    Keeps weekday and time of day, which is what historical traffic depends on.
    """
    if departure > now:
        return departure
    weeks = math.floor((now - departure) / WEEK_S) + 1
    return departure + weeks * WEEK_S


def parse_directions(doc: dict) -> list[RouteStep]:
    """Convert a directions JSON response into route steps.

    Step durations are scaled so each leg's steps add up to the leg's
    ``duration_in_traffic`` when the service reports one. Zero-length or
    zero-time steps are folded into the following step.
    """
    status = doc.get("status", "OK")
    if status == "ZERO_RESULTS" or status == "NOT_FOUND":
        raise ZeroResultsError(f"directions service returned {status}")
    if status in ("OVER_QUERY_LIMIT", "OVER_DAILY_LIMIT", "REQUEST_DENIED"):
        raise QuotaError(f"directions service returned {status}: {doc.get('error_message', '')}".strip(),
                         retry_after=2.0 if status == "OVER_QUERY_LIMIT" else None)
    if status != "OK":
        raise ProviderError(f"directions service returned {status}: {doc.get('error_message', '')}".strip())
    routes = doc.get("routes") or []
    if not routes:
        raise ZeroResultsError("directions response has no routes")
    out: list[RouteStep] = []
    for leg in routes[0].get("legs", []):
        raw = []
        for st in leg.get("steps", []):
            pts = decode_points(st["polyline"]["points"])
            raw.append((pts, float(st["distance"]["value"]), float(st["duration"]["value"])))
        total = sum(r[2] for r in raw)
        traffic = leg.get("duration_in_traffic", {}).get("value")
        scale = float(traffic) / total if traffic and total > 0 else 1.0
        carry_pts: list[tuple[float, float]] = []
        carry_d = carry_t = 0.0
        for pts, d, t in raw:
            carry_pts = carry_pts + (pts[1:] if carry_pts and pts and carry_pts[-1] == pts[0] else pts)
            carry_d += d
            carry_t += t * scale
            if carry_d > 0 and carry_t > 0 and carry_pts:
                geom = Polyline(tuple(GeoPoint(a, b) for a, b in carry_pts))
                out.append(RouteStep(geom, carry_d, carry_t))
                carry_pts, carry_d, carry_t = [], 0.0, 0.0
        if (carry_d > 0 or carry_t > 0) and out:
            last = out.pop()
            pts = [(p.lat, p.lon) for p in last.geometry.points] + carry_pts
            geom = Polyline(tuple(GeoPoint(a, b) for a, b in pts))
            out.append(RouteStep(geom, last.d_step + carry_d, last.t_step + carry_t))
    if not out:
        raise ZeroResultsError("directions response has no usable steps")
    return out


class RemoteProvider:
    """Directions API client with disk cache and client-side rate limiting."""

    def __init__(self, api_key: str | None = None, *, cache_dir: str | Path | None = None,
                 requests_per_second: float = 5.0, client: httpx.Client | None = None,
                 url: str = DIRECTIONS_URL, clock: Callable[[], float] = time.time,
                 limiter: TokenBucket | None = None, timeout: float = 10.0):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise ProviderError(f"no API key; set {API_KEY_ENV}")
        self.url = url
        self.client = client or httpx.Client(timeout=timeout)
        self.cache = DiskCache(cache_dir) if cache_dir is not None else None
        self.clock = clock
        self.limiter = limiter or TokenBucket(requests_per_second, 1.0)

    def params_for(self, q: TrafficQuery) -> dict[str, str]:
        fmt = lambda p: f"{p.lat:.6f},{p.lon:.6f}"  # noqa: E731
        params = {
            "origin": fmt(q.waypoints[0]),
            "destination": fmt(q.waypoints[-1]),
            "departure_time": str(int(math.floor(shift_to_future(q.departure, self.clock())))),
            "traffic_model": q.model.value,
            "mode": "driving",
            "key": self.api_key,
        }
        if len(q.waypoints) > 2:
            params["waypoints"] = "|".join("via:" + fmt(p) for p in q.waypoints[1:-1])
        return params

    def get_route(self, q: TrafficQuery) -> list[RouteStep]:
        if self.cache is not None:
            hit = self.cache.get(q)
            if hit is not None:
                return hit
        self.limiter.acquire()
        try:
            resp = self.client.get(self.url, params=self.params_for(q))
        except httpx.HTTPError as exc:
            raise TransportError(f"directions request failed: {exc}") from exc
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After")
            raise QuotaError("directions service rate limited the request",
                             retry_after=float(retry) if retry else 1.0)
        if resp.status_code in (401, 403):
            raise QuotaError(f"directions service denied the request (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise TransportError(f"directions service answered HTTP {resp.status_code}")
        try:
            doc = resp.json()
        except ValueError as exc:
            raise TransportError("directions response is not JSON") from exc
        steps = parse_directions(doc)
        if self.cache is not None:
            self.cache.put(q, steps)
        return steps
