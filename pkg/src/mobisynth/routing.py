"""Fastest paths on the road graph and waypoint extraction."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import NoRouteError, RoutingError
from .geo import GeoPoint, Polyline, bearing_deg, concat_polylines, haversine_distance, heading_change_deg
from .osm import RoadGraph

TURN_THRESHOLD_DEG = 30.0
MAX_WAYPOINTS = 23


@dataclass(frozen=True)
class PathResult:
    vertex_ids: tuple[int, ...]
    geometry: Polyline
    total_time_s: float
    total_length_m: float


def nearest_vertex(graph: RoadGraph, p: GeoPoint) -> int:
    """Vertex closest to ``p``; ties go to the smallest id."""
    if not graph.vertices:
        raise RoutingError("graph has no vertices")
    return min(graph.vertices, key=lambda k: (haversine_distance(graph.vertices[k], p), k))


def fastest_path(graph: RoadGraph, src: int, dst: int) -> PathResult:
    """Dijkstra over edge travel times.

    Equal-time alternatives resolve to the lexicographically smallest
    vertex-id sequence, so results do not depend on heap internals.
    """
    if src not in graph.vertices or dst not in graph.vertices:
        raise RoutingError(f"unknown vertex {src if src not in graph.vertices else dst}")
    adj = graph.adjacency
    best: dict[int, tuple[float, tuple[int, ...]]] = {src: (0.0, (src,))}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    done: set[int] = set()
    while heap:
        t, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for w, e in adj[u]:
            if w in done:
                continue
            nt = t + e.travel_time_s
            cand = (nt, path + (w,))
            cur = best.get(w)
            if cur is None or cand < cur:
                best[w] = cand
                heapq.heappush(heap, cand)
    if dst not in done:
        raise NoRouteError(f"no route from {src} to {dst}")
    t, path = best[dst]
    return _path_result(graph, path, t)


def _path_result(graph: RoadGraph, path: tuple[int, ...], t: float) -> PathResult:
    if len(path) == 1:
        return PathResult(path, Polyline((graph.vertices[path[0]],)), 0.0, 0.0)
    parts = []
    length = 0.0
    for a, b in zip(path, path[1:]):
        e = graph.edge_between(a, b)
        parts.append(e.geometry_from(a))
        length += e.length_m
    return PathResult(path, concat_polylines(parts), t, length)


def path_time(graph: RoadGraph, path: tuple[int, ...]) -> float:
    """Travel time of a vertex sequence, summed in path order."""
    t = 0.0
    for a, b in zip(path, path[1:]):
        t = t + graph.edge_between(a, b).travel_time_s
    return t


def split_waypoints(path: PathResult, graph: RoadGraph, max_waypoints: int = MAX_WAYPOINTS,
                    turn_threshold_deg: float = TURN_THRESHOLD_DEG) -> list[GeoPoint]:
    """Waypoints at the path ends, stop signs, and turns sharper than the threshold."""
    return [graph.vertices[v] for v in split_waypoint_ids(path, graph, max_waypoints, turn_threshold_deg)]


def split_waypoint_ids(path: PathResult, graph: RoadGraph, max_waypoints: int = MAX_WAYPOINTS,
                       turn_threshold_deg: float = TURN_THRESHOLD_DEG) -> list[int]:
    ids = path.vertex_ids
    if len(ids) < 2:
        raise RoutingError("waypoint splitting needs a path with at least two vertices")
    keep = [0]
    for k in range(1, len(ids) - 1):
        if ids[k] in graph.stop_nodes:
            keep.append(k)
            continue
        g_in = graph.edge_between(ids[k - 1], ids[k]).geometry_from(ids[k - 1]).points
        g_out = graph.edge_between(ids[k], ids[k + 1]).geometry_from(ids[k]).points
        turn = heading_change_deg(bearing_deg(g_in[-2], g_in[-1]), bearing_deg(g_out[0], g_out[1]))
        if turn > turn_threshold_deg:
            keep.append(k)
    keep.append(len(ids) - 1)
    if len(keep) > max_waypoints:
        keep = _subsample(keep, max_waypoints)
    return [ids[k] for k in keep]


def _subsample(keep: list[int], n: int) -> list[int]:
    """Keep both ends and ``n - 2`` evenly spaced interior entries."""
    if n < 2:
        raise ValueError("max_waypoints must be at least 2")
    interior = keep[1:-1]
    picks = np.linspace(0, len(interior) - 1, n - 2).round().astype(int) if n > 2 else []
    return [keep[0]] + [interior[i] for i in picks] + [keep[-1]]
