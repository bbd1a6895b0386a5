"""OpenStreetMap XML ingestion: POI catalogue and routable road graph."""

from __future__ import annotations

import enum
import json
import logging
import re
import warnings
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable

from .errors import OsmParseError, OsmWarning
from .geo import GeoPoint, Polyline

log = logging.getLogger(__name__)

KMH = 1000.0 / 3600.0
MPH = 1609.344 / 3600.0

SNAPSHOT_FORMAT = "mobisynth-snapshot"
SNAPSHOT_VERSION = 1


class PoiKind(str, enum.Enum):
    RESIDENTIAL = "residential"
    WORK = "work"
    SCHOOL = "school"
    GAS_STATION = "gas_station"
    RESTAURANT = "restaurant"
    CINEMA = "cinema"


BUILDING_KINDS = {
    "apartments": PoiKind.RESIDENTIAL,
    "house": PoiKind.RESIDENTIAL,
    "residential": PoiKind.RESIDENTIAL,
    "bungalow": PoiKind.RESIDENTIAL,
    "commercial": PoiKind.WORK,
    "industrial": PoiKind.WORK,
}

AMENITY_KINDS = {
    "school": PoiKind.SCHOOL,
    "fuel": PoiKind.GAS_STATION,
    "restaurant": PoiKind.RESTAURANT,
    "cafe": PoiKind.RESTAURANT,
    "fast_food": PoiKind.RESTAURANT,
    "cinema": PoiKind.CINEMA,
}

# km/h by highway class; anything unlisted falls back to OTHER_KMH
CLASS_SPEED_KMH = {
    "motorway": 100.0,
    "primary": 60.0,
    "secondary": 50.0,
    "residential": 40.0,
    "service": 20.0,
}
OTHER_KMH = 40.0

# highway values that are not drivable roads
NON_DRIVABLE = frozenset({
    "footway", "path", "cycleway", "steps", "pedestrian", "bridleway",
    "corridor", "construction", "proposed", "platform", "elevator",
})

_MAXSPEED_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(mph|km/h|kmh|kph)?\s*$", re.IGNORECASE)


@dataclass(frozen=True, slots=True)
class Poi:
    id: str
    kind: PoiKind
    location: GeoPoint


@dataclass(frozen=True, slots=True)
class Edge:
    u: int
    v: int
    geometry: Polyline
    length_m: float
    speed_limit_mps: float

    @property
    def travel_time_s(self) -> float:
        return self.length_m / self.speed_limit_mps

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u

    def geometry_from(self, node: int) -> Polyline:
        """Edge geometry oriented to start at ``node``."""
        if node == self.u:
            return self.geometry
        return Polyline(tuple(reversed(self.geometry.points)))


@dataclass(frozen=True)
class RoadGraph:
    """Undirected road graph. Edge weights are free-flow travel times."""

    vertices: dict[int, GeoPoint]
    edges: tuple[Edge, ...]
    stop_nodes: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        for e in self.edges:
            if e.u not in self.vertices or e.v not in self.vertices:
                raise ValueError(f"edge ({e.u}, {e.v}) references an unknown vertex")
            if not e.length_m > 0:
                raise ValueError(f"edge ({e.u}, {e.v}) has non-positive length")
            if not e.speed_limit_mps > 0:
                raise ValueError(f"edge ({e.u}, {e.v}) has non-positive speed limit")

    @cached_property
    def adjacency(self) -> dict[int, list[tuple[int, Edge]]]:
        """Neighbour lists sorted by neighbour id; parallel edges keep the fastest."""
        best: dict[tuple[int, int], Edge] = {}
        for e in self.edges:
            for a, b in ((e.u, e.v), (e.v, e.u)):
                cur = best.get((a, b))
                if cur is None or e.travel_time_s < cur.travel_time_s:
                    best[(a, b)] = e
        adj: dict[int, list[tuple[int, Edge]]] = {v: [] for v in self.vertices}
        for (a, b), e in best.items():
            adj[a].append((b, e))
        for lst in adj.values():
            lst.sort(key=lambda t: t[0])
        return adj

    def edge_between(self, a: int, b: int) -> Edge:
        for n, e in self.adjacency[a]:
            if n == b:
                return e
        raise KeyError((a, b))

    @classmethod
    def from_edges(cls, coords: dict[int, tuple[float, float]], edges: Iterable[tuple[int, int, float]],
                   stop_nodes: Iterable[int] = ()) -> "RoadGraph":
        """Build a straight-edge graph from ``(u, v, speed_mps)`` triples."""
        verts = {k: GeoPoint(*c) for k, c in coords.items()}
        out = []
        for u, v, speed in edges:
            geom = Polyline((verts[u], verts[v]))
            out.append(Edge(u, v, geom, geom.length_m, speed))
        return cls(verts, tuple(out), frozenset(stop_nodes))


def parse_maxspeed(value: str) -> float | None:
    """Parse an OSM maxspeed value into m/s, or None if unparseable."""
    m = _MAXSPEED_RE.match(value)
    if not m:
        return None
    number = float(m.group(1))
    if number <= 0:
        return None
    unit = (m.group(2) or "km/h").lower()
    return number * (MPH if unit == "mph" else KMH)


def default_speed(highway_class: str, maxspeed: str | None = None) -> float:
    """Speed limit in m/s: the maxspeed tag if parseable, else the class default."""
    if maxspeed is not None:
        parsed = parse_maxspeed(maxspeed)
        if parsed is not None:
            return parsed
        warnings.warn(f"unparseable maxspeed {maxspeed!r} on highway={highway_class}; "
                      "using class default", OsmWarning, stacklevel=2)
    return CLASS_SPEED_KMH.get(highway_class, OTHER_KMH) * KMH


def _classify(tags: dict[str, str]) -> PoiKind | None:
    amenity = tags.get("amenity")
    if amenity in AMENITY_KINDS:
        return AMENITY_KINDS[amenity]
    building = tags.get("building")
    if building in BUILDING_KINDS:
        return BUILDING_KINDS[building]
    return None


def _tags(elem: ET.Element) -> dict[str, str]:
    return {t.get("k", ""): t.get("v", "") for t in elem.findall("tag")}


def parse_extract(source: bytes | str | Path | IO[bytes]) -> tuple[list[Poi], RoadGraph]:
    """Parse OSM XML into a POI list and a road graph.

    ``source`` is raw bytes, a path, or a binary stream. Ways that reference
    missing nodes are dropped with an :class:`OsmWarning`.
    """
    try:
        if isinstance(source, (bytes, bytearray)):
            root = ET.fromstring(source)
        elif isinstance(source, (str, Path)):
            root = ET.parse(source).getroot()
        else:
            root = ET.parse(source).getroot()
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmParseError(f"malformed OSM XML: {exc.msg if hasattr(exc, 'msg') else exc}",
                            line, col) from exc

    nodes: dict[int, GeoPoint] = {}
    node_tags: dict[int, dict[str, str]] = {}
    for n in root.iter("node"):
        try:
            nid = int(n.get("id"))
            nodes[nid] = GeoPoint(float(n.get("lat")), float(n.get("lon")))
        except (TypeError, ValueError) as exc:
            warnings.warn(f"skipping node {n.get('id')!r}: {exc}", OsmWarning, stacklevel=2)
            continue
        tags = _tags(n)
        if tags:
            node_tags[nid] = tags

    pois: list[Poi] = []
    for nid, tags in node_tags.items():
        kind = _classify(tags)
        if kind is not None:
            pois.append(Poi(f"node/{nid}", kind, nodes[nid]))

    road_ways: list[tuple[int, list[int], dict[str, str]]] = []
    for w in root.iter("way"):
        wid = int(w.get("id"))
        refs = [int(nd.get("ref")) for nd in w.findall("nd")]
        tags = _tags(w)
        missing = [r for r in refs if r not in nodes]
        if missing:
            warnings.warn(f"way {wid} references missing node(s) {missing[:3]}; way rejected",
                          OsmWarning, stacklevel=2)
            continue
        if not refs:
            continue
        kind = _classify(tags)
        if kind is not None:
            ring = refs[:-1] if len(refs) > 1 and refs[0] == refs[-1] else refs
            lat = sum(nodes[r].lat for r in ring) / len(ring)
            lon = sum(nodes[r].lon for r in ring) / len(ring)
            pois.append(Poi(f"way/{wid}", kind, GeoPoint(lat, lon)))
        hw = tags.get("highway")
        if hw and hw not in NON_DRIVABLE and len(refs) >= 2:
            road_ways.append((wid, refs, tags))

    graph = _build_graph(nodes, node_tags, road_ways)
    pois.sort(key=lambda p: p.id)
    log.info("parsed %d POIs, %d vertices, %d edges", len(pois), len(graph.vertices), len(graph.edges))
    return pois, graph


def _build_graph(nodes: dict[int, GeoPoint], node_tags: dict[int, dict[str, str]],
                 road_ways: list[tuple[int, list[int], dict[str, str]]]) -> RoadGraph:
    use_count: dict[int, int] = defaultdict(int)
    for _, refs, _ in road_ways:
        for r in refs:
            use_count[r] += 1

    road_nodes = set(use_count)
    stops = {n for n in road_nodes if node_tags.get(n, {}).get("highway") == "stop"}
    vertex_ids: set[int] = set(stops)
    for _, refs, _ in road_ways:
        vertex_ids.add(refs[0])
        vertex_ids.add(refs[-1])
    vertex_ids.update(n for n, c in use_count.items() if c >= 2)

    edges: list[Edge] = []
    for wid, refs, tags in sorted(road_ways, key=lambda t: t[0]):
        speed = default_speed(tags["highway"], tags.get("maxspeed"))
        start = 0
        for i in range(1, len(refs)):
            if refs[i] not in vertex_ids:
                continue
            run = refs[start:i + 1]
            start = i
            u, v = run[0], run[-1]
            if u == v:
                continue
            geom = Polyline(tuple(nodes[r] for r in run))
            if geom.length_m <= 0:
                warnings.warn(f"way {wid}: zero-length edge {u}-{v} dropped", OsmWarning, stacklevel=3)
                continue
            edges.append(Edge(u, v, geom, geom.length_m, speed))

    used = {e.u for e in edges} | {e.v for e in edges}
    vertices = {n: nodes[n] for n in sorted(vertex_ids & used)}
    return RoadGraph(vertices, tuple(edges), frozenset(stops & used))


# --- snapshots -------------------------------------------------------------

def snapshot_dict(pois: list[Poi], graph: RoadGraph) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "pois": [[p.id, p.kind.value, p.location.lat, p.location.lon] for p in pois],
        "vertices": [[k, p.lat, p.lon] for k, p in sorted(graph.vertices.items())],
        "edges": [
            {"u": e.u, "v": e.v, "speed_mps": e.speed_limit_mps,
             "geometry": [[p.lat, p.lon] for p in e.geometry.points]}
            for e in graph.edges
        ],
        "stop_nodes": sorted(graph.stop_nodes),
    }


def write_snapshot(path: str | Path, pois: list[Poi], graph: RoadGraph) -> None:
    text = json.dumps(snapshot_dict(pois, graph), separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_snapshot(path: str | Path) -> tuple[list[Poi], RoadGraph]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path}: not a {SNAPSHOT_FORMAT} file")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {doc.get('version')}")
    pois = [Poi(i, PoiKind(k), GeoPoint(lat, lon)) for i, k, lat, lon in doc["pois"]]
    vertices = {int(k): GeoPoint(lat, lon) for k, lat, lon in doc["vertices"]}
    edges = []
    for e in doc["edges"]:
        geom = Polyline(tuple(GeoPoint(lat, lon) for lat, lon in e["geometry"]))
        edges.append(Edge(e["u"], e["v"], geom, geom.length_m, e["speed_mps"]))
    return pois, RoadGraph(vertices, tuple(edges), frozenset(doc["stop_nodes"]))
